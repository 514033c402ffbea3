//! The proxy: a data port running the classify → decide → execute/kill loop,
//! an authenticated admin port, and a local console socket for password
//! resets.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use chrono::{DateTime, NaiveDate, Utc};
use thiserror::Error;
use tracing::{debug, error, info, warn};

use crate::admin::{AdminControl, AdminError, ConsoleToken, FileOutbox, GrantWindow};
use crate::audit::{AuditError, AuditStore, DdlLogRecord, KilledSessionRecord};
use crate::catalog::{load_users, Catalog, DbUser, ExecResult, SeedError, UsersFileError};
use crate::classifier::{normalize_identifier, ObjectType, StatementClass};
use crate::config::ServerConfig;
use crate::policy::{decide, Reason, Verdict};
use crate::protocol::{escape_field, read_line_limited, split_args, Reply, MAX_AUTH_FAILURES, MAX_FRAME, MAX_LINE};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

/// Schema that bootstrap SQL runs under.
pub const SEED_SCHEMA: &str = "SYS";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Users(#[from] UsersFileError),
    #[error(transparent)]
    Admin(#[from] AdminError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("cannot read seed file {}: {source}", path.display())]
    SeedFile { path: PathBuf, source: io::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Open,
    Killed,
    Closed,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: u64,
    pub user: DbUser,
    pub connected_at: DateTime<Utc>,
    state: SessionState,
}

impl Session {
    pub fn state(&self) -> SessionState {
        self.state
    }
}

/// Everything a connection handler needs, shared across threads.
pub struct Guard {
    admin: AdminControl,
    audit: AuditStore,
    catalog: Catalog,
    clock: Clock,
    next_session: AtomicU64,
    sessions: Mutex<BTreeMap<u64, String>>,
}

impl Guard {
    pub fn new(admin: AdminControl, audit: AuditStore, catalog: Catalog, clock: Clock) -> Guard {
        let next = audit.max_session_id() + 1;
        Guard { admin, audit, catalog, clock, next_session: AtomicU64::new(next), sessions: Mutex::new(BTreeMap::new()) }
    }

    /// Loads state, audit files, users and seed objects. Refuses to start on
    /// anything it cannot read cleanly.
    pub fn open(cfg: &ServerConfig, clock: Clock) -> Result<Guard, ServerError> {
        let users = load_users(&cfg.users_file)?;
        let outbox = FileOutbox::new(&cfg.outbox_dir);
        let admin = AdminControl::open(&cfg.state_dir, Box::new(outbox), cfg.security_officer.clone())?;
        let audit = AuditStore::open(&cfg.state_dir)?;
        let catalog = Catalog::new(users);
        if let Some(path) = &cfg.seed_sql {
            let text = fs::read_to_string(path).map_err(|source| ServerError::SeedFile { path: path.clone(), source })?;
            let n = catalog.run_seed(admin.snapshot().classifier(), &text, SEED_SCHEMA, clock())?;
            info!(statements = n, "seeded catalog");
        }
        Ok(Guard::new(admin, audit, catalog, clock))
    }

    pub fn admin(&self) -> &AdminControl {
        &self.admin
    }

    pub fn audit(&self) -> &AuditStore {
        &self.audit
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Starts a session for a catalog user.
    pub fn login(&self, username: &str) -> Result<Session, Reply> {
        let name = normalize_identifier(username.trim()).map_err(|_| Reply::err("auth", "invalid user name"))?;
        let user = self.catalog.user(&name).cloned().ok_or_else(|| Reply::err("auth", "unknown user"))?;
        let id = self.next_session.fetch_add(1, Ordering::SeqCst);
        self.sessions.lock().unwrap().insert(id, user.name.clone());
        debug!(session = id, user = %user.name, "session opened");
        Ok(Session { id, user, connected_at: self.now(), state: SessionState::Open })
    }

    /// Runs one statement through the guard.
    pub fn process(&self, session: &mut Session, text: &str) -> Reply {
        if session.state != SessionState::Open {
            return Reply::err("protocol", "session is not open");
        }
        let snap = self.admin.snapshot();
        let stmt = snap.classifier().classify(text, &session.user.default_schema);
        let now = self.now();
        let decision = decide(&session.user.name, session.user.is_dba, &stmt, &snap.registry, &snap.grants, &snap.config, now);

        if stmt.class == StatementClass::Ddl {
            let logged = DdlLogRecord::new(session.id, &session.user.name, &stmt, decision.verdict, now)
                .and_then(|rec| self.audit.record_ddl(&rec));
            if let Err(e) = logged {
                error!(session = session.id, error = %e, "ddl log write failed");
                if decision.verdict == Verdict::Allow {
                    return Reply::err("audit_failure", e.to_string());
                }
            }
        }

        if decision.is_kill() {
            self.kill_session(session, &stmt.raw, decision.reason);
            return Reply::Kill(decision.reason);
        }
        match self.catalog.execute(&stmt, &session.user, now) {
            Ok(ExecResult::Ack) => Reply::Ok,
            Ok(ExecResult::Rows(rows)) => Reply::Rows(rows),
            Err(e) => Reply::err(e.code(), e.to_string()),
        }
    }

    /// Marks the session killed and appends its audit row. A second kill of
    /// the same session does nothing and returns false.
    pub fn kill_session(&self, session: &mut Session, statement: &str, reason: Reason) -> bool {
        if session.state != SessionState::Open {
            return false;
        }
        session.state = SessionState::Killed;
        self.sessions.lock().unwrap().remove(&session.id);
        let rec = KilledSessionRecord {
            session_id: session.id,
            user: session.user.name.clone(),
            statement: statement.to_string(),
            reason,
            killed_at: self.now(),
        };
        match self.audit.record_killed(&rec) {
            Ok(()) => info!(session = session.id, user = %session.user.name, %reason, "session killed"),
            Err(e) => error!(session = session.id, error = %e, "killed-session record failed"),
        }
        true
    }

    pub fn close_session(&self, session: &mut Session) {
        if session.state == SessionState::Open {
            session.state = SessionState::Closed;
            self.sessions.lock().unwrap().remove(&session.id);
            debug!(session = session.id, "session closed");
        }
    }

    /// Handles one admin-port line.
    pub fn admin_line(&self, conn: &mut AdminSession, line: &str) -> AdminReply {
        let words = split_args(line);
        let Some(cmd) = words.first() else { return AdminReply::err("protocol", "empty command") };
        let cmd = cmd.to_ascii_uppercase();
        if cmd == "QUIT" {
            return AdminReply { bytes: b"OK bye\n".to_vec(), close: true };
        }
        if cmd == "AUTH" {
            if conn.password.is_some() {
                return AdminReply::err("protocol", "already authenticated");
            }
            let [_, password] = words.as_slice() else { return AdminReply::err("usage", "AUTH <password>") };
            if self.admin.authenticate(password) {
                conn.password = Some(password.clone());
                return AdminReply::ok("authenticated");
            }
            conn.failures += 1;
            warn!(failures = conn.failures, "admin authentication failed");
            let mut reply = AdminReply::err("bad_password", "authentication failed");
            reply.close = conn.failures >= MAX_AUTH_FAILURES;
            return reply;
        }
        let Some(password) = conn.password.clone() else {
            return AdminReply::err("auth_required", "authenticate first");
        };
        let args = &words[1..];
        let result = match cmd.as_str() {
            "SET_SECURITY" => match args {
                [v] if v.eq_ignore_ascii_case("on") || v.eq_ignore_ascii_case("off") => {
                    let on = v.eq_ignore_ascii_case("on");
                    self.admin.set_security(&password, on).map(|_| AdminReply::ok(if on { "security on" } else { "security off" }))
                }
                _ => return AdminReply::err("usage", "SET_SECURITY on|off"),
            },
            "SET_PASSWORD" => match args {
                [old, new] => self.admin.set_password(old, new).map(|_| {
                    conn.password = Some(new.clone());
                    AdminReply::ok("password changed")
                }),
                _ => return AdminReply::err("usage", "SET_PASSWORD <old> <new>"),
            },
            "ADD_OBJECT" | "REMOVE_OBJECT" => {
                let Some((owner, ty, name)) = object_args(args) else {
                    return AdminReply::err("usage", format!("{cmd} <owner> <type> <name>"));
                };
                let Ok(ty) = ty else { return AdminReply::err("invalid_type", "unknown object type") };
                if cmd == "ADD_OBJECT" {
                    self.admin.add_object(owner, ty, name).map(|_| AdminReply::ok("added"))
                } else {
                    self.admin.remove_object(owner, ty, name).map(|_| AdminReply::ok("removed"))
                }
            }
            "GRANT" | "REVOKE" => {
                let Some((user, rest)) = args.split_first() else {
                    return AdminReply::err("usage", format!("{cmd} <user> <owner> <type> <name>"));
                };
                let (obj, opts) = rest.split_at(rest.len().min(3));
                let Some((owner, ty, name)) = object_args(obj) else {
                    return AdminReply::err("usage", format!("{cmd} <user> <owner> <type> <name>"));
                };
                let Ok(ty) = ty else { return AdminReply::err("invalid_type", "unknown object type") };
                if cmd == "REVOKE" {
                    if !opts.is_empty() {
                        return AdminReply::err("usage", "REVOKE takes no options");
                    }
                    self.admin.revoke_permission(user, owner, ty, name).map(|_| AdminReply::ok("revoked"))
                } else {
                    let window = match parse_window(opts) {
                        Ok(w) => w,
                        Err(msg) => return AdminReply::err("usage", msg),
                    };
                    self.admin.grant_permission(user, owner, ty, name, window).map(|_| AdminReply::ok("granted"))
                }
            }
            "EXPORT_KILLED" => {
                let (from, to) = match parse_range(args) {
                    Ok(r) => r,
                    Err(msg) => return AdminReply::err("usage", msg),
                };
                return match self.audit.export_killed(from, to) {
                    Ok(csv) => {
                        let mut bytes = format!("OK export {}\n", csv.len()).into_bytes();
                        bytes.extend_from_slice(csv.as_bytes());
                        AdminReply { bytes, close: false }
                    }
                    Err(AuditError::InvalidRange(f, t)) => AdminReply::err("invalid_range", format!("{f} is after {t}")),
                    Err(e) => AdminReply::err("storage_failure", e.to_string()),
                };
            }
            "STATUS" if args.is_empty() => {
                let s = self.admin.snapshot();
                return AdminReply::ok(&format!(
                    "security={} version={} objects={} grants={} sessions={} killed={} ddl={}",
                    if s.config.enabled { "on" } else { "off" },
                    s.version,
                    s.registry.len(),
                    s.grants.len(),
                    self.open_sessions(),
                    self.audit.killed_count(),
                    self.audit.ddl_count(),
                ));
            }
            "LIST_OBJECTS" if args.is_empty() => {
                let s = self.admin.snapshot();
                let rows = s.registry.entries().iter().map(|p| {
                    vec![
                        p.object.owner.clone(),
                        p.object.obj_type.as_str().to_string(),
                        p.object.name.clone(),
                        if p.guard_owned { "guard" } else { "user" }.to_string(),
                    ]
                });
                return AdminReply::rows(rows.collect());
            }
            "LIST_GRANTS" if args.is_empty() => {
                let s = self.admin.snapshot();
                let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
                let rows = s.grants.grants().iter().map(|g| {
                    vec![
                        g.grantee.clone(),
                        g.object.owner.clone(),
                        g.object.obj_type.as_str().to_string(),
                        g.object.name.clone(),
                        opt(g.start_date.map(|d| d.to_string())),
                        opt(g.end_date.map(|d| d.to_string())),
                        opt(g.start_hour.map(|h| h.to_string())),
                        opt(g.end_hour.map(|h| h.to_string())),
                    ]
                });
                return AdminReply::rows(rows.collect());
            }
            "STATUS" | "LIST_OBJECTS" | "LIST_GRANTS" => return AdminReply::err("usage", format!("{cmd} takes no arguments")),
            _ => return AdminReply::err("unknown_command", format!("unknown command {cmd}")),
        };
        result.unwrap_or_else(|e| AdminReply::err(e.code(), e.to_string()))
    }

    /// Handles one console-socket line.
    pub fn console_line(&self, line: &str) -> String {
        if line.trim() != "RESET_PASSWORD" {
            return "ERR unknown_command console accepts RESET_PASSWORD only\n".into();
        }
        match self.admin.reset_password(&ConsoleToken::new()) {
            Ok(note) => {
                info!(recipient = %note.recipient, "admin password reset");
                format!("OK reset sent to {}\n", note.recipient)
            }
            Err(e) => format!("ERR {} {}\n", e.code(), e),
        }
    }
}

fn object_args(args: &[String]) -> Option<(&str, Result<ObjectType, ()>, &str)> {
    match args {
        [owner, ty, name] => Some((owner, ObjectType::from_str(ty).map_err(|_| ()), name)),
        _ => None,
    }
}

fn parse_window(opts: &[String]) -> Result<GrantWindow, String> {
    let mut w = GrantWindow::default();
    for opt in opts {
        let (k, v) = opt.split_once('=').ok_or_else(|| format!("expected key=value, got {opt}"))?;
        let date = || NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| format!("{k} must be YYYY-MM-DD"));
        let hour = || v.parse::<u8>().map_err(|_| format!("{k} must be an hour 0-23"));
        match k {
            "start_date" => w.start_date = Some(date()?),
            "end_date" => w.end_date = Some(date()?),
            "start_hour" => w.start_hour = Some(hour()?),
            "end_hour" => w.end_hour = Some(hour()?),
            _ => return Err(format!("unknown option {k}")),
        }
    }
    Ok(w)
}

fn parse_range(opts: &[String]) -> Result<(Option<NaiveDate>, Option<NaiveDate>), String> {
    let (mut from, mut to) = (None, None);
    for opt in opts {
        let (k, v) = opt.split_once('=').ok_or_else(|| format!("expected key=value, got {opt}"))?;
        let d = NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| format!("{k} must be YYYY-MM-DD"))?;
        match k {
            "from" => from = Some(d),
            "to" => to = Some(d),
            _ => return Err(format!("unknown option {k}")),
        }
    }
    Ok((from, to))
}

/// Per-connection admin state.
#[derive(Debug, Default)]
pub struct AdminSession {
    password: Option<String>,
    failures: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdminReply {
    pub bytes: Vec<u8>,
    pub close: bool,
}

impl AdminReply {
    fn ok(msg: &str) -> AdminReply {
        AdminReply { bytes: format!("OK {msg}\n").into_bytes(), close: false }
    }

    fn err(code: &str, msg: impl AsRef<str>) -> AdminReply {
        let msg = msg.as_ref().replace(['\n', '\r'], " ");
        AdminReply { bytes: format!("ERR {code} {msg}\n").into_bytes(), close: false }
    }

    fn rows(rows: Vec<Vec<String>>) -> AdminReply {
        let mut out = format!("OK rows {}\n", rows.len());
        for row in rows {
            let cells: Vec<String> = row.iter().map(|c| escape_field(c)).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        AdminReply { bytes: out.into_bytes(), close: false }
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.bytes).into_owned()
    }
}

// ---------------------------------------------------------------------------
// networking

fn serve_data(guard: &Guard, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let Some(line) = read_line_limited(&mut reader, MAX_LINE)? else { return Ok(()) };
    let Some(user) = line.strip_prefix("AUTH ") else {
        writer.write_all(&Reply::err("protocol", "expected AUTH <username>").encode())?;
        return Ok(());
    };
    let mut session = match guard.login(user) {
        Ok(s) => s,
        Err(reply) => {
            writer.write_all(&reply.encode())?;
            return Ok(());
        }
    };
    writer.write_all(format!("OK session={}\n", session.id).as_bytes())?;
    let result = data_loop(guard, &mut session, &mut reader, &mut writer);
    guard.close_session(&mut session);
    let _ = writer.shutdown(Shutdown::Both);
    result
}

fn data_loop(guard: &Guard, session: &mut Session, reader: &mut BufReader<TcpStream>, writer: &mut TcpStream) -> io::Result<()> {
    loop {
        let line = match read_line_limited(reader, MAX_LINE) {
            Ok(Some(l)) => l,
            Ok(None) => return Ok(()),
            Err(e) => {
                let _ = writer.write_all(&Reply::err("protocol", e.to_string()).encode());
                return Ok(());
            }
        };
        let Some(n) = line.strip_prefix("STMT ").and_then(|n| n.parse::<usize>().ok()) else {
            writer.write_all(&Reply::err("protocol", "expected STMT <nbytes>").encode())?;
            return Ok(());
        };
        if n > MAX_FRAME {
            writer.write_all(&Reply::err("frame_too_large", format!("statement exceeds {MAX_FRAME} bytes")).encode())?;
            return Ok(());
        }
        let mut buf = vec![0u8; n];
        reader.read_exact(&mut buf)?;
        let Ok(text) = String::from_utf8(buf) else {
            writer.write_all(&Reply::err("protocol", "statement is not UTF-8").encode())?;
            return Ok(());
        };
        let reply = guard.process(session, &text);
        let killed = matches!(reply, Reply::Kill(_));
        let sent = writer.write_all(&reply.encode());
        if killed {
            return Ok(());
        }
        sent?;
    }
}

fn serve_admin(guard: &Guard, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut conn = AdminSession::default();
    while let Some(line) = read_line_limited(&mut reader, MAX_LINE)? {
        let reply = guard.admin_line(&mut conn, &line);
        writer.write_all(&reply.bytes)?;
        if reply.close {
            break;
        }
    }
    let _ = writer.shutdown(Shutdown::Both);
    Ok(())
}

#[cfg(unix)]
fn serve_console(guard: &Guard, stream: std::os::unix::net::UnixStream) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    if let Some(line) = read_line_limited(&mut reader, MAX_LINE)? {
        writer.write_all(guard.console_line(&line).as_bytes())?;
    }
    Ok(())
}

/// Open connections, so shutdown can close them.
#[derive(Default)]
struct ConnTable {
    next: AtomicU64,
    conns: Mutex<HashMap<u64, TcpStream>>,
}

impl ConnTable {
    fn register(&self, s: &TcpStream) -> Option<u64> {
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        let clone = s.try_clone().ok()?;
        self.conns.lock().unwrap().insert(id, clone);
        Some(id)
    }

    fn release(&self, id: u64) {
        self.conns.lock().unwrap().remove(&id);
    }

    fn close_all(&self) {
        for (_, s) in self.conns.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

struct ShutdownInner {
    stopping: AtomicBool,
    wake: Vec<SocketAddr>,
    console: Option<PathBuf>,
    conns: ConnTable,
}

/// Stops a running server from any thread.
#[derive(Clone)]
pub struct ShutdownHandle {
    inner: Arc<ShutdownInner>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        if self.inner.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        info!("shutting down");
        for addr in &self.inner.wake {
            let _ = TcpStream::connect(addr);
        }
        #[cfg(unix)]
        if let Some(p) = &self.inner.console {
            let _ = std::os::unix::net::UnixStream::connect(p);
        }
        self.inner.conns.close_all();
    }

    pub fn is_stopping(&self) -> bool {
        self.inner.stopping.load(Ordering::SeqCst)
    }
}

fn loopback_for(addr: SocketAddr) -> SocketAddr {
    let mut a = addr;
    if a.ip().is_unspecified() {
        a.set_ip(match a {
            SocketAddr::V4(_) => std::net::Ipv4Addr::LOCALHOST.into(),
            SocketAddr::V6(_) => std::net::Ipv6Addr::LOCALHOST.into(),
        });
    }
    a
}

pub struct Server {
    guard: Arc<Guard>,
    data: TcpListener,
    admin: TcpListener,
    #[cfg(unix)]
    console: Option<(std::os::unix::net::UnixListener, PathBuf)>,
    handle: ShutdownHandle,
}

impl Server {
    /// Opens state and binds all listeners.
    pub fn bind(cfg: &ServerConfig, clock: Clock) -> Result<Server, ServerError> {
        let guard = Arc::new(Guard::open(cfg, clock)?);
        Server::bind_guard(guard, cfg)
    }

    pub fn bind_guard(guard: Arc<Guard>, cfg: &ServerConfig) -> Result<Server, ServerError> {
        let bind = |port: u16| {
            let addr = format!("{}:{port}", cfg.bind);
            TcpListener::bind(&addr).map_err(|source| ServerError::Bind { addr, source })
        };
        let data = bind(cfg.data_port)?;
        let admin = bind(cfg.admin_port)?;
        #[cfg(unix)]
        let console = Some((bind_console(&cfg.console_socket)?, cfg.console_socket.clone()));
        let wake = vec![loopback_for(data.local_addr()?), loopback_for(admin.local_addr()?)];
        let handle = ShutdownHandle {
            inner: Arc::new(ShutdownInner {
                stopping: AtomicBool::new(false),
                wake,
                console: Some(cfg.console_socket.clone()),
                conns: ConnTable::default(),
            }),
        };
        info!(data = %data.local_addr()?, admin = %admin.local_addr()?, "listening");
        Ok(Server {
            guard,
            data,
            admin,
            #[cfg(unix)]
            console,
            handle,
        })
    }

    pub fn data_addr(&self) -> SocketAddr {
        loopback_for(self.data.local_addr().expect("bound listener"))
    }

    pub fn admin_addr(&self) -> SocketAddr {
        loopback_for(self.admin.local_addr().expect("bound listener"))
    }

    pub fn guard(&self) -> Arc<Guard> {
        self.guard.clone()
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.handle.clone()
    }

    /// Serves until [`ShutdownHandle::shutdown`] is called, then waits for
    /// every connection handler to finish.
    pub fn run(self) {
        let workers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
        let mut acceptors = Vec::new();

        for (listener, kind) in [(self.data, "data"), (self.admin, "admin")] {
            let guard = self.guard.clone();
            let handle = self.handle.clone();
            let workers = workers.clone();
            acceptors.push(thread::spawn(move || accept_tcp(listener, kind, guard, handle, workers)));
        }
        #[cfg(unix)]
        if let Some((listener, path)) = self.console {
            let guard = self.guard.clone();
            let handle = self.handle.clone();
            acceptors.push(thread::spawn(move || {
                for stream in listener.incoming() {
                    if handle.is_stopping() {
                        break;
                    }
                    match stream {
                        Ok(s) => {
                            if let Err(e) = serve_console(&guard, s) {
                                debug!(error = %e, "console connection ended");
                            }
                        }
                        Err(e) => warn!(error = %e, "console accept failed"),
                    }
                }
                let _ = fs::remove_file(&path);
            }));
        }
        for a in acceptors {
            let _ = a.join();
        }
        let pending: Vec<_> = workers.lock().unwrap().drain(..).collect();
        for w in pending {
            let _ = w.join();
        }
        info!("stopped");
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> RunningServer {
        let data_addr = self.data_addr();
        let admin_addr = self.admin_addr();
        let guard = self.guard.clone();
        let handle = self.handle.clone();
        let thread = thread::spawn(move || self.run());
        RunningServer { data_addr, admin_addr, guard, handle, thread: Some(thread) }
    }
}

#[cfg(unix)]
fn bind_console(path: &std::path::Path) -> Result<std::os::unix::net::UnixListener, ServerError> {
    use std::os::unix::fs::{FileTypeExt, PermissionsExt};
    if let Ok(meta) = fs::symlink_metadata(path) {
        if meta.file_type().is_socket() {
            fs::remove_file(path)?;
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let listener = std::os::unix::net::UnixListener::bind(path)
        .map_err(|source| ServerError::Bind { addr: path.display().to_string(), source })?;
    fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
    Ok(listener)
}

fn accept_tcp(
    listener: TcpListener,
    kind: &'static str,
    guard: Arc<Guard>,
    handle: ShutdownHandle,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
) {
    for stream in listener.incoming() {
        if handle.is_stopping() {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!(error = %e, kind, "accept failed");
                continue;
            }
        };
        let Some(id) = handle.inner.conns.register(&stream) else { continue };
        let guard = guard.clone();
        let h = handle.clone();
        let worker = thread::spawn(move || {
            let result = match kind {
                "data" => serve_data(&guard, stream),
                _ => serve_admin(&guard, stream),
            };
            if let Err(e) = result {
                debug!(error = %e, kind, "connection ended with error");
            }
            h.inner.conns.release(id);
        });
        let mut list = workers.lock().unwrap();
        list.retain(|w| !w.is_finished());
        list.push(worker);
    }
}

/// A server running on a background thread; stops when dropped.
pub struct RunningServer {
    pub data_addr: SocketAddr,
    pub admin_addr: SocketAddr,
    pub guard: Arc<Guard>,
    handle: ShutdownHandle,
    thread: Option<JoinHandle<()>>,
}

impl RunningServer {
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.handle.clone()
    }

    pub fn stop(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.handle.shutdown();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.stop_inner();
    }
}
