//! The guard's control surface: protection switch, password lifecycle,
//! protected-object registry and grants, with durable state.
//!
//! State lives in three tab-separated files in the state directory
//! (`security_object.tsv`, `user_permission.tsv`, `p_config.tsv`). Each file
//! ends with a `#sha256` line over the preceding bytes; a file that fails the
//! check, or a directory holding only some of the files, refuses to load.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use rand::distributions::Alphanumeric;
use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audit::{format_timestamp, parse_timestamp};
use crate::classifier::{normalize_identifier, Classifier, InvalidIdentifier, ObjectRef, ObjectType};
use crate::policy::{
    default_dictionary_views, guard_object_refs, is_guard_object, Grant, GrantSet, GuardConfig,
    ProtectedObject, Registry, WindowError,
};

pub const SECURITY_OBJECT_FILE: &str = "security_object.tsv";
pub const USER_PERMISSION_FILE: &str = "user_permission.tsv";
pub const P_CONFIG_FILE: &str = "p_config.tsv";
const STATE_FILES: [&str; 3] = [SECURITY_OBJECT_FILE, USER_PERMISSION_FILE, P_CONFIG_FILE];

pub const MIN_PASSWORD_LEN: usize = 8;
pub const RESET_PASSWORD_LEN: usize = 16;
const DIGEST_ROUNDS: u32 = 4096;
const SALT_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("bad password")]
    BadPassword,
    #[error("password must be at least {MIN_PASSWORD_LEN} characters")]
    WeakPassword,
    #[error("object {0} is already protected")]
    DuplicateObject(ObjectRef),
    #[error(transparent)]
    InvalidIdentifier(#[from] InvalidIdentifier),
    #[error("object {0} is not in the protection list")]
    NotFound(ObjectRef),
    #[error("object {0} belongs to the guard and cannot be changed")]
    GuardObjectImmutable(ObjectRef),
    #[error("object {0} is not protected")]
    ObjectNotProtected(ObjectRef),
    #[error("invalid grant window: {0}")]
    InvalidWindow(#[from] WindowError),
    #[error("{0} already holds a grant on {1}")]
    DuplicateGrant(String, ObjectRef),
    #[error("{0} holds no grant on {1}")]
    GrantNotFound(String, ObjectRef),
    #[error("notification failed: {0}")]
    NotifyFailure(String),
    #[error("state storage failure: {0}")]
    Storage(#[from] io::Error),
    #[error("corrupt state: {0}")]
    CorruptState(String),
    #[error("state directory is not initialized")]
    Uninitialized,
    #[error("state directory is already initialized")]
    AlreadyInitialized,
}

impl AdminError {
    /// Stable error code used on the admin wire protocol.
    pub fn code(&self) -> &'static str {
        match self {
            AdminError::BadPassword => "bad_password",
            AdminError::WeakPassword => "weak_password",
            AdminError::DuplicateObject(_) => "duplicate_object",
            AdminError::InvalidIdentifier(_) => "invalid_identifier",
            AdminError::NotFound(_) => "not_found",
            AdminError::GuardObjectImmutable(_) => "guard_object_immutable",
            AdminError::ObjectNotProtected(_) => "object_not_protected",
            AdminError::InvalidWindow(_) => "invalid_window",
            AdminError::DuplicateGrant(..) => "duplicate_grant",
            AdminError::GrantNotFound(..) => "grant_not_found",
            AdminError::NotifyFailure(_) => "notify_failure",
            AdminError::Storage(_) => "storage_failure",
            AdminError::CorruptState(_) => "corrupt_state",
            AdminError::Uninitialized => "uninitialized",
            AdminError::AlreadyInitialized => "already_initialized",
        }
    }
}

fn digest_password(salt: &[u8], password: &str) -> Vec<u8> {
    let mut h = Sha256::new().chain_update(salt).chain_update(password.as_bytes()).finalize();
    for _ in 1..DIGEST_ROUNDS {
        h = Sha256::new().chain_update(salt).chain_update(h).finalize();
    }
    h.to_vec()
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn verify_password(candidate: &str, cfg: &GuardConfig) -> bool {
    !cfg.password_digest.is_empty()
        && constant_time_eq(&digest_password(&cfg.salt, candidate), &cfg.password_digest)
}

fn fresh_credentials(password: &str) -> (Vec<u8>, Vec<u8>) {
    let mut salt = vec![0u8; SALT_LEN];
    rand::thread_rng().fill_bytes(&mut salt);
    let digest = digest_password(&salt, password);
    (salt, digest)
}

pub fn generate_password() -> String {
    rand::thread_rng().sample_iter(&Alphanumeric).take(RESET_PASSWORD_LEN).map(char::from).collect()
}

/// Optional date range and daily hour window of a grant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrantWindow {
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub start_hour: Option<u8>,
    pub end_hour: Option<u8>,
}

impl GrantWindow {
    pub fn hours(start: u8, end: u8) -> Self {
        GrantWindow { start_hour: Some(start), end_hour: Some(end), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdminState {
    pub config: GuardConfig,
    pub registry: Registry,
    pub grants: GrantSet,
    pub version: u64,
    classifier: Classifier,
}

impl AdminState {
    /// First-run state: protection on, guard objects registered.
    pub fn initial(password: &str, dictionary_views: Option<Vec<String>>, now: DateTime<Utc>) -> Result<Self, AdminError> {
        if password.chars().count() < MIN_PASSWORD_LEN {
            return Err(AdminError::WeakPassword);
        }
        let (salt, password_digest) = fresh_credentials(password);
        let dictionary_views = match dictionary_views {
            Some(v) => v.into_iter().map(|s| s.to_ascii_uppercase()).collect(),
            None => default_dictionary_views(),
        };
        let registry = Registry::from_entries(
            guard_object_refs()
                .map(|object| ProtectedObject { object, added_at: now, guard_owned: true })
                .collect(),
        );
        Ok(AdminState::assemble(
            GuardConfig { enabled: true, password_digest, salt, dictionary_views },
            registry,
            GrantSet::default(),
            0,
        ))
    }

    fn assemble(config: GuardConfig, registry: Registry, grants: GrantSet, version: u64) -> Self {
        let classifier = Classifier::new(config.dictionary_views.iter().cloned());
        AdminState { config, registry, grants, version, classifier }
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    fn bump(&mut self) {
        self.version += 1;
    }

    pub fn set_security(&mut self, password: &str, enabled: bool) -> Result<(), AdminError> {
        if !verify_password(password, &self.config) {
            return Err(AdminError::BadPassword);
        }
        self.config.enabled = enabled;
        self.bump();
        Ok(())
    }

    pub fn set_password(&mut self, old: &str, new: &str) -> Result<(), AdminError> {
        if !verify_password(old, &self.config) {
            return Err(AdminError::BadPassword);
        }
        if new.chars().count() < MIN_PASSWORD_LEN {
            return Err(AdminError::WeakPassword);
        }
        self.replace_password(new);
        Ok(())
    }

    fn replace_password(&mut self, new: &str) {
        let (salt, digest) = fresh_credentials(new);
        self.config.salt = salt;
        self.config.password_digest = digest;
        self.bump();
    }

    pub fn add_object(&mut self, owner: &str, obj_type: ObjectType, name: &str, now: DateTime<Utc>) -> Result<(), AdminError> {
        let object = ObjectRef::parse(owner, obj_type, name)?;
        if is_guard_object(&object) || self.registry.contains_exact(&object) {
            return Err(AdminError::DuplicateObject(object));
        }
        self.registry.push(ProtectedObject { object, added_at: now, guard_owned: false });
        self.bump();
        Ok(())
    }

    pub fn remove_object(&mut self, owner: &str, obj_type: ObjectType, name: &str) -> Result<(), AdminError> {
        let object = ObjectRef::parse(owner, obj_type, name)?;
        if is_guard_object(&object) {
            return Err(AdminError::GuardObjectImmutable(object));
        }
        if self.registry.remove_exact(&object).is_none() {
            return Err(AdminError::NotFound(object));
        }
        self.bump();
        Ok(())
    }

    pub fn grant_permission(
        &mut self,
        user: &str,
        owner: &str,
        obj_type: ObjectType,
        name: &str,
        window: GrantWindow,
    ) -> Result<(), AdminError> {
        let grantee = normalize_identifier(user)?;
        let object = ObjectRef::parse(owner, obj_type, name)?;
        if is_guard_object(&object) {
            return Err(AdminError::GuardObjectImmutable(object));
        }
        if !self.registry.contains_exact(&object) {
            return Err(AdminError::ObjectNotProtected(object));
        }
        let grant = Grant {
            grantee,
            object,
            start_date: window.start_date,
            end_date: window.end_date,
            start_hour: window.start_hour,
            end_hour: window.end_hour,
        };
        grant.validate()?;
        if self.grants.find(&grant.grantee, &grant.object).is_some() {
            return Err(AdminError::DuplicateGrant(grant.grantee, grant.object));
        }
        self.grants.push(grant);
        self.bump();
        Ok(())
    }

    pub fn revoke_permission(&mut self, user: &str, owner: &str, obj_type: ObjectType, name: &str) -> Result<(), AdminError> {
        let grantee = normalize_identifier(user)?;
        let object = ObjectRef::parse(owner, obj_type, name)?;
        if self.grants.remove(&grantee, &object).is_none() {
            return Err(AdminError::GrantNotFound(grantee, object));
        }
        self.bump();
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// persistence

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

fn seal(rows: &[Vec<String>]) -> String {
    let mut body = String::new();
    for row in rows {
        let fields: Vec<String> = row.iter().map(|f| escape_field(f)).collect();
        body.push_str(&fields.join("\t"));
        body.push('\n');
    }
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("{body}#sha256\t{digest}\n")
}

fn unseal(name: &str, text: &str) -> Result<Vec<Vec<String>>, AdminError> {
    let corrupt = |why: &str| AdminError::CorruptState(format!("{name}: {why}"));
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("missing integrity line"))?;
    let (body, seal_line) = text.split_at(body_end);
    let expected = seal_line
        .strip_prefix("#sha256\t")
        .map(|s| s.trim_end_matches('\n'))
        .ok_or_else(|| corrupt("missing integrity line"))?;
    if !seal_line.ends_with('\n') || hex::encode(Sha256::digest(body.as_bytes())) != expected {
        return Err(corrupt("integrity check failed"));
    }
    body.lines()
        .map(|line| line.split('\t').map(unescape_field).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| corrupt(&e))
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn encode_state(state: &AdminState) -> [(&'static str, String); 3] {
    let mut objects = vec![vec!["owner".into(), "obj_type".into(), "name".into(), "added_at".into(), "guard_owned".into()]];
    for e in state.registry.entries() {
        objects.push(vec![
            e.object.owner.clone(),
            e.object.obj_type.as_str().into(),
            e.object.name.clone(),
            format_timestamp(&e.added_at),
            if e.guard_owned { "1" } else { "0" }.into(),
        ]);
    }
    let mut perms = vec![[
        "grantee", "owner", "obj_type", "name", "start_date", "end_date", "start_hour", "end_hour",
    ]
    .map(String::from)
    .to_vec()];
    for g in state.grants.grants() {
        perms.push(vec![
            g.grantee.clone(),
            g.object.owner.clone(),
            g.object.obj_type.as_str().into(),
            g.object.name.clone(),
            opt(&g.start_date),
            opt(&g.end_date),
            opt(&g.start_hour),
            opt(&g.end_hour),
        ]);
    }
    let cfg = &state.config;
    let mut config = vec![
        vec!["version".into(), state.version.to_string()],
        vec!["enabled".into(), if cfg.enabled { "1" } else { "0" }.into()],
        vec!["salt".into(), hex::encode(&cfg.salt)],
        vec!["password_digest".into(), hex::encode(&cfg.password_digest)],
    ];
    for v in &cfg.dictionary_views {
        config.push(vec!["dictionary_view".into(), v.clone()]);
    }
    [
        (SECURITY_OBJECT_FILE, seal(&objects)),
        (USER_PERMISSION_FILE, seal(&perms)),
        (P_CONFIG_FILE, seal(&config)),
    ]
}

fn decode_state(objects: &str, perms: &str, config: &str) -> Result<AdminState, AdminError> {
    let corrupt = |file: &str, why: String| AdminError::CorruptState(format!("{file}: {why}"));

    let mut entries = Vec::new();
    for row in unseal(SECURITY_OBJECT_FILE, objects)?.into_iter().skip(1) {
        let bad = |why: &str| corrupt(SECURITY_OBJECT_FILE, why.to_string());
        let [owner, ty, name, added, guard] = <[String; 5]>::try_from(row).map_err(|_| bad("wrong field count"))?;
        let obj_type = ty.parse::<ObjectType>().map_err(|e| bad(&e.to_string()))?;
        entries.push(ProtectedObject {
            object: ObjectRef::new(owner, obj_type, name),
            added_at: parse_timestamp(&added).ok_or_else(|| bad("bad timestamp"))?,
            guard_owned: guard == "1",
        });
    }
    let registry = Registry::from_entries(entries);
    for guard in guard_object_refs() {
        if !registry.entries().iter().any(|e| e.object == guard && e.guard_owned) {
            return Err(corrupt(SECURITY_OBJECT_FILE, format!("guard object {guard} missing")));
        }
    }

    let mut grants = Vec::new();
    for row in unseal(USER_PERMISSION_FILE, perms)?.into_iter().skip(1) {
        let bad = |why: String| corrupt(USER_PERMISSION_FILE, why);
        let [grantee, owner, ty, name, sd, ed, sh, eh] =
            <[String; 8]>::try_from(row).map_err(|_| bad("wrong field count".into()))?;
        let date = |s: &str| -> Result<Option<NaiveDate>, AdminError> {
            if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|e| bad(format!("{e}"))) }
        };
        let hour = |s: &str| -> Result<Option<u8>, AdminError> {
            if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|e| bad(format!("{e}"))) }
        };
        let grant = Grant {
            grantee,
            object: ObjectRef::new(owner, ty.parse().map_err(|e: crate::classifier::UnknownObjectType| bad(e.to_string()))?, name),
            start_date: date(&sd)?,
            end_date: date(&ed)?,
            start_hour: hour(&sh)?,
            end_hour: hour(&eh)?,
        };
        grant.validate().map_err(|e| bad(e.to_string()))?;
        grants.push(grant);
    }

    let mut version = None;
    let mut enabled = None;
    let mut salt = None;
    let mut digest = None;
    let mut views = std::collections::BTreeSet::new();
    for row in unseal(P_CONFIG_FILE, config)? {
        let bad = |why: &str| corrupt(P_CONFIG_FILE, why.to_string());
        let [k, v] = <[String; 2]>::try_from(row).map_err(|_| bad("wrong field count"))?;
        match k.as_str() {
            "version" => version = Some(v.parse::<u64>().map_err(|_| bad("bad version"))?),
            "enabled" => enabled = Some(v == "1"),
            "salt" => salt = Some(hex::decode(&v).map_err(|_| bad("bad salt"))?),
            "password_digest" => digest = Some(hex::decode(&v).map_err(|_| bad("bad digest"))?),
            "dictionary_view" => {
                views.insert(v);
            }
            other => return Err(bad(&format!("unknown key {other}"))),
        }
    }
    let missing = |k: &str| corrupt(P_CONFIG_FILE, format!("missing {k}"));
    let password_digest = digest.ok_or_else(|| missing("password_digest"))?;
    if password_digest.is_empty() {
        return Err(missing("password_digest"));
    }
    let config = GuardConfig {
        enabled: enabled.ok_or_else(|| missing("enabled"))?,
        password_digest,
        salt: salt.ok_or_else(|| missing("salt"))?,
        dictionary_views: views,
    };
    Ok(AdminState::assemble(config, registry, GrantSet::from_grants(grants), version.ok_or_else(|| missing("version"))?))
}

/// True when none of the state files exist yet.
pub fn is_uninitialized(dir: &Path) -> bool {
    STATE_FILES.iter().all(|f| !dir.join(f).exists())
}

pub fn load_state(dir: &Path) -> Result<AdminState, AdminError> {
    let present: Vec<bool> = STATE_FILES.iter().map(|f| dir.join(f).exists()).collect();
    if present.iter().all(|p| !p) {
        return Err(AdminError::Uninitialized);
    }
    if !present.iter().all(|p| *p) {
        return Err(AdminError::CorruptState("some state files are missing".into()));
    }
    let read = |f: &str| -> Result<String, AdminError> {
        let bytes = fs::read(dir.join(f))?;
        String::from_utf8(bytes).map_err(|_| AdminError::CorruptState(format!("{f}: not UTF-8")))
    };
    decode_state(
        &read(SECURITY_OBJECT_FILE)?,
        &read(USER_PERMISSION_FILE)?,
        &read(P_CONFIG_FILE)?,
    )
}

/// Writes each file to a temporary sibling, syncs it and renames it over the
/// old one.
pub fn save_state(state: &AdminState, dir: &Path) -> Result<(), AdminError> {
    fs::create_dir_all(dir)?;
    for (name, contents) in encode_state(state) {
        let tmp = dir.join(format!("{name}.tmp"));
        let mut f = OpenOptions::new().write(true).create(true).truncate(true).open(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, dir.join(name))?;
    }
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Writes the first-run state. Refuses if any state already exists.
pub fn initialize_state(dir: &Path, password: &str, dictionary_views: Option<Vec<String>>) -> Result<AdminState, AdminError> {
    if !is_uninitialized(dir) {
        return Err(AdminError::AlreadyInitialized);
    }
    let state = AdminState::initial(password, dictionary_views, Utc::now())?;
    save_state(&state, dir)?;
    Ok(state)
}

// ---------------------------------------------------------------------------
// notifications

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    pub recipient: String,
    pub password: String,
    pub issued_at: DateTime<Utc>,
}

impl Notification {
    pub fn render(&self) -> String {
        format!(
            "recipient={}\npassword={}\nissued_at={}\n",
            self.recipient,
            self.password,
            format_timestamp(&self.issued_at)
        )
    }

    pub fn parse(text: &str) -> Option<Notification> {
        let mut recipient = None;
        let mut password = None;
        let mut issued_at = None;
        for line in text.lines() {
            let (k, v) = line.split_once('=')?;
            match k {
                "recipient" => recipient = Some(v.to_string()),
                "password" => password = Some(v.to_string()),
                "issued_at" => issued_at = parse_timestamp(v),
                _ => return None,
            }
        }
        Some(Notification { recipient: recipient?, password: password?, issued_at: issued_at? })
    }
}

pub trait NotificationSink: Send + Sync {
    fn deliver(&self, n: &Notification) -> Result<(), String>;
}

/// One file per event in an outbox directory.
pub struct FileOutbox {
    dir: PathBuf,
    seq: AtomicU64,
}

impl FileOutbox {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileOutbox { dir: dir.into(), seq: AtomicU64::new(0) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl NotificationSink for FileOutbox {
    fn deliver(&self, n: &Notification) -> Result<(), String> {
        let write = || -> io::Result<()> {
            fs::create_dir_all(&self.dir)?;
            let seq = self.seq.fetch_add(1, Ordering::Relaxed);
            let stem = format!("{}-{:04}", n.issued_at.format("%Y%m%dT%H%M%S%.6fZ"), seq);
            let tmp = self.dir.join(format!(".{stem}.tmp"));
            let mut f = File::create(&tmp)?;
            f.write_all(n.render().as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, self.dir.join(format!("{stem}.txt")))
        };
        write().map_err(|e| format!("outbox {}: {e}", self.dir.display()))
    }
}

// ---------------------------------------------------------------------------
// live control

/// Proof that a call arrived over the local console channel.
pub struct ConsoleToken(());

impl ConsoleToken {
    pub(crate) fn new() -> Self {
        ConsoleToken(())
    }
}

/// Serialized writer over a shared, snapshot-readable [`AdminState`].
pub struct AdminControl {
    dir: PathBuf,
    current: RwLock<Arc<AdminState>>,
    writer: Mutex<()>,
    sink: Box<dyn NotificationSink>,
    recipient: String,
    failed_attempts: AtomicU64,
}

impl AdminControl {
    pub fn new(dir: impl Into<PathBuf>, state: AdminState, sink: Box<dyn NotificationSink>, recipient: impl Into<String>) -> Self {
        AdminControl {
            dir: dir.into(),
            current: RwLock::new(Arc::new(state)),
            writer: Mutex::new(()),
            sink,
            recipient: recipient.into(),
            failed_attempts: AtomicU64::new(0),
        }
    }

    /// Loads the state directory; refuses corrupt or uninitialized state.
    pub fn open(dir: impl Into<PathBuf>, sink: Box<dyn NotificationSink>, recipient: impl Into<String>) -> Result<Self, AdminError> {
        let dir = dir.into();
        let state = load_state(&dir)?;
        Ok(AdminControl::new(dir, state, sink, recipient))
    }

    pub fn snapshot(&self) -> Arc<AdminState> {
        self.current.read().unwrap().clone()
    }

    pub fn failed_attempts(&self) -> u64 {
        self.failed_attempts.load(Ordering::Relaxed)
    }

    /// Checks an admin password, counting failures.
    pub fn authenticate(&self, password: &str) -> bool {
        let ok = verify_password(password, &self.snapshot().config);
        if !ok {
            self.failed_attempts.fetch_add(1, Ordering::Relaxed);
        }
        ok
    }

    fn mutate(&self, f: impl FnOnce(&mut AdminState) -> Result<(), AdminError>) -> Result<Arc<AdminState>, AdminError> {
        let _w = self.writer.lock().unwrap();
        let mut next = (*self.snapshot()).clone();
        if let Err(e) = f(&mut next) {
            if matches!(e, AdminError::BadPassword) {
                self.failed_attempts.fetch_add(1, Ordering::Relaxed);
            }
            return Err(e);
        }
        save_state(&next, &self.dir)?;
        let next = Arc::new(next);
        *self.current.write().unwrap() = next.clone();
        Ok(next)
    }

    pub fn set_security(&self, password: &str, enabled: bool) -> Result<Arc<AdminState>, AdminError> {
        self.mutate(|s| s.set_security(password, enabled))
    }

    pub fn set_password(&self, old: &str, new: &str) -> Result<Arc<AdminState>, AdminError> {
        self.mutate(|s| s.set_password(old, new))
    }

    pub fn add_object(&self, owner: &str, obj_type: ObjectType, name: &str) -> Result<Arc<AdminState>, AdminError> {
        let now = Utc::now();
        self.mutate(|s| s.add_object(owner, obj_type, name, now))
    }

    pub fn remove_object(&self, owner: &str, obj_type: ObjectType, name: &str) -> Result<Arc<AdminState>, AdminError> {
        self.mutate(|s| s.remove_object(owner, obj_type, name))
    }

    pub fn grant_permission(
        &self,
        user: &str,
        owner: &str,
        obj_type: ObjectType,
        name: &str,
        window: GrantWindow,
    ) -> Result<Arc<AdminState>, AdminError> {
        self.mutate(|s| s.grant_permission(user, owner, obj_type, name, window))
    }

    pub fn revoke_permission(&self, user: &str, owner: &str, obj_type: ObjectType, name: &str) -> Result<Arc<AdminState>, AdminError> {
        self.mutate(|s| s.revoke_permission(user, owner, obj_type, name))
    }

    /// Generates a new password and sends it to the security officer. The
    /// notification goes out before the new digest is stored, so a failed
    /// delivery leaves the old password in force.
    pub fn reset_password(&self, _console: &ConsoleToken) -> Result<Notification, AdminError> {
        let password = generate_password();
        let note = Notification { recipient: self.recipient.clone(), password, issued_at: Utc::now() };
        self.mutate(|s| {
            self.sink.deliver(&note).map_err(AdminError::NotifyFailure)?;
            s.replace_password(&note.password);
            Ok(())
        })?;
        Ok(note)
    }
}
