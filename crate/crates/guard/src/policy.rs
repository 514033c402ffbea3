//! Admission policy: decides whether a session may run a statement.
//!
//! Rules are applied in a fixed order, first match wins:
//!
//! 1. any target is one of the guard's own objects: kill (even when disabled)
//! 2. protection disabled: allow
//! 3. reads a dictionary source view without grants on every protected object: kill
//! 4. DDL or DML on a protected object without an active grant: kill
//! 5. allow
//!
//! The DBA flag is accepted but never consulted.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Timelike, Utc};
use thiserror::Error;

use crate::classifier::{ObjectRef, ObjectType, ParsedStatement, StatementClass, DEFAULT_DICTIONARY_VIEWS};

/// Schema owning the guard's own tables and package.
pub const GUARD_SCHEMA: &str = "GUARD";

/// The guard's own objects, pre-registered and never removable.
pub const GUARD_OBJECTS: [(&str, ObjectType); 6] = [
    ("SECURITY_OBJECT", ObjectType::Table),
    ("USER_PERMISSION", ObjectType::Table),
    ("P_CONFIG", ObjectType::Table),
    ("KILLED_SESSIONS", ObjectType::Table),
    ("DDL_LOG", ObjectType::Table),
    ("GUARD_PKG", ObjectType::Package),
];

pub fn is_guard_object(r: &ObjectRef) -> bool {
    r.owner == GUARD_SCHEMA && GUARD_OBJECTS.iter().any(|(name, _)| *name == r.name)
}

pub fn guard_object_refs() -> impl Iterator<Item = ObjectRef> {
    GUARD_OBJECTS.iter().map(|(name, ty)| ObjectRef::new(GUARD_SCHEMA, *ty, *name))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedObject {
    pub object: ObjectRef,
    pub added_at: DateTime<Utc>,
    pub guard_owned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("start date {0} is after end date {1}")]
    DatesReversed(NaiveDate, NaiveDate),
    #[error("start and end hour must both be given or both omitted")]
    HalfOpenHours,
    #[error("start hour equals end hour ({0})")]
    EmptyHourWindow(u8),
    #[error("hour {0} is outside 0-23")]
    HourOutOfRange(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grant {
    pub grantee: String,
    pub object: ObjectRef,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub start_hour: Option<u8>,
    pub end_hour: Option<u8>,
}

impl Grant {
    /// A grant with no date or hour restriction.
    pub fn unbounded(grantee: impl Into<String>, object: ObjectRef) -> Self {
        Grant {
            grantee: grantee.into(),
            object,
            start_date: None,
            end_date: None,
            start_hour: None,
            end_hour: None,
        }
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if let (Some(s), Some(e)) = (self.start_date, self.end_date) {
            if s > e {
                return Err(WindowError::DatesReversed(s, e));
            }
        }
        match (self.start_hour, self.end_hour) {
            (None, None) => Ok(()),
            (Some(s), Some(e)) => {
                if let Some(bad) = [s, e].into_iter().find(|h| *h > 23) {
                    Err(WindowError::HourOutOfRange(bad))
                } else if s == e {
                    Err(WindowError::EmptyHourWindow(s))
                } else {
                    Ok(())
                }
            }
            _ => Err(WindowError::HalfOpenHours),
        }
    }
}

/// Whether `g` is in force at `at` (UTC). Hour windows with start > end wrap
/// around midnight.
pub fn is_grant_active(g: &Grant, at: DateTime<Utc>) -> bool {
    let day = at.date_naive();
    if g.start_date.is_some_and(|s| day < s) || g.end_date.is_some_and(|e| day > e) {
        return false;
    }
    match (g.start_hour, g.end_hour) {
        (Some(start), Some(end)) => {
            let hour = at.hour() as u8;
            if start < end {
                start <= hour && hour < end
            } else {
                hour >= start || hour < end
            }
        }
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Allow,
    Kill,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Allow => "ALLOW",
            Verdict::Kill => "KILL",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ALLOW" => Ok(Verdict::Allow),
            "KILL" => Ok(Verdict::Kill),
            _ => Err(format!("unknown verdict {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    Ok,
    ProtectedObject,
    GuardObject,
    DictionaryView,
    DisabledPassthrough,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Ok => "OK",
            Reason::ProtectedObject => "PROTECTED_OBJECT",
            Reason::GuardObject => "GUARD_OBJECT",
            Reason::DictionaryView => "DICTIONARY_VIEW",
            Reason::DisabledPassthrough => "DISABLED_PASSTHROUGH",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reason {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Reason::Ok,
            Reason::ProtectedObject,
            Reason::GuardObject,
            Reason::DictionaryView,
            Reason::DisabledPassthrough,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| format!("unknown reason {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decision {
    pub verdict: Verdict,
    pub reason: Reason,
}

impl Decision {
    pub const OK: Decision = Decision { verdict: Verdict::Allow, reason: Reason::Ok };
    pub const PASSTHROUGH: Decision =
        Decision { verdict: Verdict::Allow, reason: Reason::DisabledPassthrough };

    pub fn kill(reason: Reason) -> Decision {
        Decision { verdict: Verdict::Kill, reason }
    }

    pub fn is_kill(&self) -> bool {
        self.verdict == Verdict::Kill
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardConfig {
    pub enabled: bool,
    pub password_digest: Vec<u8>,
    pub salt: Vec<u8>,
    pub dictionary_views: BTreeSet<String>,
}

pub fn default_dictionary_views() -> BTreeSet<String> {
    DEFAULT_DICTIONARY_VIEWS.iter().map(|s| s.to_string()).collect()
}

type NameKey = (String, String);

fn key(r: &ObjectRef) -> NameKey {
    (r.owner.clone(), r.name.clone())
}

/// The protected-object set, indexed by `(owner, name)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    entries: Vec<ProtectedObject>,
    index: HashMap<NameKey, Vec<usize>>,
    /// Distinct `(owner, name)` keys with at least one non-guard entry.
    unguarded_keys: usize,
}

impl Registry {
    pub fn from_entries(entries: Vec<ProtectedObject>) -> Self {
        let mut reg = Registry { entries, index: HashMap::new(), unguarded_keys: 0 };
        reg.reindex();
        reg
    }

    fn reindex(&mut self) {
        self.index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            self.index.entry(key(&e.object)).or_default().push(i);
        }
        self.unguarded_keys =
            self.index.values().filter(|ix| ix.iter().any(|&i| !self.entries[i].guard_owned)).count();
    }

    /// Number of distinct `(owner, name)` pairs among non-guard entries.
    pub fn unguarded_names(&self) -> usize {
        self.unguarded_keys
    }

    pub fn entries(&self) -> &[ProtectedObject] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_exact(&self, r: &ObjectRef) -> bool {
        self.index
            .get(&key(r))
            .is_some_and(|ix| ix.iter().any(|&i| self.entries[i].object == *r))
    }

    /// Registry entries that `target` may refer to.
    pub fn matching<'s>(&'s self, target: &'s ObjectRef) -> impl Iterator<Item = &'s ProtectedObject> + 's {
        self.index
            .get(&key(target))
            .into_iter()
            .flatten()
            .map(|&i| &self.entries[i])
            .filter(move |e| e.object.obj_type.compatible(target.obj_type))
    }

    pub fn push(&mut self, obj: ProtectedObject) {
        let k = key(&obj.object);
        let had_unguarded = self.index.get(&k).is_some_and(|ix| ix.iter().any(|&i| !self.entries[i].guard_owned));
        if !obj.guard_owned && !had_unguarded {
            self.unguarded_keys += 1;
        }
        self.index.entry(k).or_default().push(self.entries.len());
        self.entries.push(obj);
    }

    /// Removes the entry with exactly this ref.
    pub fn remove_exact(&mut self, r: &ObjectRef) -> Option<ProtectedObject> {
        let pos = self.entries.iter().position(|e| e.object == *r)?;
        let removed = self.entries.remove(pos);
        self.reindex();
        Some(removed)
    }
}

/// Grants indexed by grantee, then by object `(owner, name)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrantSet {
    grants: Vec<Grant>,
    by_user: HashMap<String, HashMap<NameKey, Vec<usize>>>,
}

impl GrantSet {
    pub fn from_grants(grants: Vec<Grant>) -> Self {
        let mut set = GrantSet { grants, by_user: HashMap::new() };
        set.reindex();
        set
    }

    fn reindex(&mut self) {
        self.by_user.clear();
        for (i, g) in self.grants.iter().enumerate() {
            self.by_user.entry(g.grantee.clone()).or_default().entry(key(&g.object)).or_default().push(i);
        }
    }

    pub fn grants(&self) -> &[Grant] {
        &self.grants
    }

    pub fn len(&self) -> usize {
        self.grants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    pub fn for_user<'s>(&'s self, user: &str) -> impl Iterator<Item = &'s Grant> + 's {
        self.by_user
            .get(user)
            .into_iter()
            .flat_map(|m| m.values().flatten())
            .map(|&i| &self.grants[i])
    }

    fn for_user_object<'s>(&'s self, user: &str, object: &ObjectRef) -> impl Iterator<Item = &'s Grant> + 's {
        self.by_user
            .get(user)
            .and_then(|m| m.get(&key(object)))
            .into_iter()
            .flatten()
            .map(|&i| &self.grants[i])
    }

    pub fn find(&self, user: &str, object: &ObjectRef) -> Option<&Grant> {
        self.for_user_object(user, object).find(|g| g.object == *object)
    }

    pub fn push(&mut self, g: Grant) {
        let idx = self.grants.len();
        self.by_user.entry(g.grantee.clone()).or_default().entry(key(&g.object)).or_default().push(idx);
        self.grants.push(g);
    }

    pub fn remove(&mut self, user: &str, object: &ObjectRef) -> Option<Grant> {
        let pos = self.grants.iter().position(|g| g.grantee == user && g.object == *object)?;
        let removed = self.grants.remove(pos);
        self.reindex();
        Some(removed)
    }

    /// Number of distinct `(owner, name)` pairs `user` holds grants on.
    pub fn names_for_user(&self, user: &str) -> usize {
        self.by_user.get(user).map_or(0, HashMap::len)
    }

    /// Whether `user` holds a grant covering `object` that is in force at `at`.
    pub fn has_active(&self, user: &str, object: &ObjectRef, at: DateTime<Utc>) -> bool {
        self.for_user_object(user, object).any(|g| g.object.matches(object) && is_grant_active(g, at))
    }
}

/// Decide whether `user` may run `stmt` at `at`.
pub fn decide(
    user: &str,
    _is_dba: bool,
    stmt: &ParsedStatement,
    registry: &Registry,
    grants: &GrantSet,
    cfg: &GuardConfig,
    at: DateTime<Utc>,
) -> Decision {
    if stmt.targets.iter().any(is_guard_object) {
        return Decision::kill(Reason::GuardObject);
    }
    if !cfg.enabled {
        return Decision::PASSTHROUGH;
    }
    if !stmt.dictionary_refs.is_empty() {
        // every unguarded name needs a grant of its own
        let shielded = grants.names_for_user(user) < registry.unguarded_names()
            || registry
            .entries()
            .iter()
            .filter(|e| !e.guard_owned)
            .any(|e| !grants.has_active(user, &e.object, at));
        if shielded {
            return Decision::kill(Reason::DictionaryView);
        }
    }
    if matches!(stmt.class, StatementClass::Ddl | StatementClass::Dml) {
        let denied = stmt.targets.iter().any(|t| {
            registry.matching(t).any(|e| !grants.has_active(user, &e.object, at))
        });
        if denied {
            return Decision::kill(Reason::ProtectedObject);
        }
    }
    Decision::OK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify;
    use chrono::TimeZone;

    fn ts(y: i32, m: u32, d: u32, h: u32, min: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, h, min, 0).unwrap()
    }

    fn cfg(enabled: bool) -> GuardConfig {
        GuardConfig {
            enabled,
            password_digest: vec![1],
            salt: vec![2],
            dictionary_views: default_dictionary_views(),
        }
    }

    fn emp_actions() -> ObjectRef {
        ObjectRef::new("HR", ObjectType::Package, "EMP_ACTIONS")
    }

    fn registry() -> Registry {
        let mut reg = Registry::default();
        for r in guard_object_refs() {
            reg.push(ProtectedObject { object: r, added_at: ts(2024, 1, 1, 0, 0), guard_owned: true });
        }
        reg.push(ProtectedObject { object: emp_actions(), added_at: ts(2024, 1, 1, 0, 0), guard_owned: false });
        reg
    }

    fn hours(s: u8, e: u8) -> Grant {
        Grant { start_hour: Some(s), end_hour: Some(e), ..Grant::unbounded("SCOTT", emp_actions()) }
    }

    #[test]
    fn unbounded_grant_always_active() {
        let g = Grant::unbounded("SCOTT", emp_actions());
        assert!(is_grant_active(&g, ts(1999, 12, 31, 23, 59)));
        assert!(is_grant_active(&g, ts(2024, 6, 1, 0, 0)));
    }

    // reference: the wrap-around window is "hour >= start OR hour < end";
    // enumerate every hour.
    #[test]
    fn wraparound_hours_brute_force() {
        let g = hours(22, 6);
        let expected: Vec<u32> = (0..24).filter(|h| *h >= 22 || *h < 6).collect();
        let got: Vec<u32> = (0..24).filter(|h| is_grant_active(&g, ts(2024, 3, 3, *h, 30))).collect();
        assert_eq!(got, expected);
        assert!(is_grant_active(&g, ts(2024, 3, 3, 23, 30)));
        assert!(!is_grant_active(&g, ts(2024, 3, 3, 12, 0)));
    }

    #[test]
    fn date_range_sweep() {
        let g = Grant {
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1),
            end_date: NaiveDate::from_ymd_opt(2024, 1, 31),
            ..Grant::unbounded("SCOTT", emp_actions())
        };
        let first = NaiveDate::from_ymd_opt(2023, 12, 25).unwrap();
        for offset in 0..45 {
            let day = first + chrono::Days::new(offset);
            let inside = day >= NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
                && day <= NaiveDate::from_ymd_opt(2024, 1, 31).unwrap();
            for h in [0, 12, 23] {
                let at = day.and_hms_opt(h, 0, 0).unwrap().and_utc();
                assert_eq!(is_grant_active(&g, at), inside, "{at}");
            }
        }
        assert!(!is_grant_active(&g, ts(2024, 2, 1, 0, 0)));
    }

    #[test]
    fn window_validation() {
        assert!(hours(9, 17).validate().is_ok());
        assert_eq!(hours(9, 9).validate(), Err(WindowError::EmptyHourWindow(9)));
        assert_eq!(hours(9, 24).validate(), Err(WindowError::HourOutOfRange(24)));
        let half = Grant { start_hour: Some(3), ..Grant::unbounded("S", emp_actions()) };
        assert_eq!(half.validate(), Err(WindowError::HalfOpenHours));
        let reversed = Grant {
            start_date: NaiveDate::from_ymd_opt(2024, 2, 1),
            end_date: NaiveDate::from_ymd_opt(2024, 1, 1),
            ..Grant::unbounded("S", emp_actions())
        };
        assert!(matches!(reversed.validate(), Err(WindowError::DatesReversed(..))));
    }

    #[test]
    fn guard_objects() {
        assert!(is_guard_object(&ObjectRef::new("GUARD", ObjectType::Table, "DDL_LOG")));
        assert!(!is_guard_object(&ObjectRef::new("HR", ObjectType::Table, "DDL_LOG")));
        assert!(is_guard_object(&ObjectRef::new("GUARD", ObjectType::Package, "GUARD_PKG")));
        assert!(is_guard_object(&ObjectRef::new("GUARD", ObjectType::Unknown, "P_CONFIG")));
    }

    #[test]
    fn dba_drop_is_killed_then_allowed_with_grant() {
        let stmt = classify("DROP PACKAGE hr.emp_actions;", "SYS");
        let at = ts(2024, 5, 5, 10, 0);
        let d = decide("SYS", true, &stmt, &registry(), &GrantSet::default(), &cfg(true), at);
        assert_eq!(d, Decision::kill(Reason::ProtectedObject));

        let grants = GrantSet::from_grants(vec![Grant::unbounded("SYS", emp_actions())]);
        let d = decide("SYS", true, &stmt, &registry(), &grants, &cfg(true), at);
        assert_eq!(d, Decision::OK);
    }

    #[test]
    fn dictionary_view_shield() {
        let stmt = classify("SELECT text FROM USER_SOURCE WHERE name = 'EMP_ACTIONS';", "SCOTT");
        let at = ts(2024, 5, 5, 10, 0);
        let d = decide("SCOTT", false, &stmt, &registry(), &GrantSet::default(), &cfg(true), at);
        assert_eq!(d, Decision::kill(Reason::DictionaryView));
        let grants = GrantSet::from_grants(vec![Grant::unbounded("SCOTT", emp_actions())]);
        let d = decide("SCOTT", false, &stmt, &registry(), &grants, &cfg(true), at);
        assert_eq!(d, Decision::OK);
    }

    #[test]
    fn guard_protection_survives_disable_and_grants() {
        let stmt = classify("DROP TABLE guard.ddl_log;", "SYS");
        let grants = GrantSet::from_grants(vec![Grant::unbounded(
            "SYS",
            ObjectRef::new("GUARD", ObjectType::Table, "DDL_LOG"),
        )]);
        let d = decide("SYS", true, &stmt, &registry(), &grants, &cfg(false), ts(2024, 1, 1, 0, 0));
        assert_eq!(d, Decision::kill(Reason::GuardObject));
    }

    #[test]
    fn disabled_passthrough() {
        let stmt = classify("DROP PACKAGE hr.emp_actions;", "SYS");
        let d = decide("SYS", true, &stmt, &registry(), &GrantSet::default(), &cfg(false), ts(2024, 1, 1, 0, 0));
        assert_eq!(d, Decision::PASSTHROUGH);
    }

    #[test]
    fn package_body_is_covered_by_package_entry() {
        let stmt = classify("CREATE OR REPLACE PACKAGE BODY hr.emp_actions AS END;", "SYS");
        let d = decide("SYS", true, &stmt, &registry(), &GrantSet::default(), &cfg(true), ts(2024, 1, 1, 0, 0));
        assert_eq!(d.reason, Reason::ProtectedObject);
    }

    #[test]
    fn queries_on_protected_objects_pass() {
        let stmt = classify("SELECT * FROM hr.emp_actions", "SCOTT");
        let d = decide("SCOTT", false, &stmt, &registry(), &GrantSet::default(), &cfg(true), ts(2024, 1, 1, 0, 0));
        assert_eq!(d, Decision::OK);
    }

    #[test]
    fn malformed_statement_falls_through() {
        let stmt = classify("DROP PACKAGE 'hr", "SYS");
        let d = decide("SYS", true, &stmt, &registry(), &GrantSet::default(), &cfg(true), ts(2024, 1, 1, 0, 0));
        assert_eq!(d, Decision::OK);
    }

    #[test]
    fn grant_set_indexing() {
        let mut set = GrantSet::default();
        set.push(Grant::unbounded("A", emp_actions()));
        set.push(Grant::unbounded("B", emp_actions()));
        assert!(set.find("A", &emp_actions()).is_some());
        assert!(set.remove("A", &emp_actions()).is_some());
        assert!(set.find("A", &emp_actions()).is_none());
        assert!(set.find("B", &emp_actions()).is_some());
        assert_eq!(set.for_user("B").count(), 1);
    }

    #[test]
    fn reason_round_trips_through_text() {
        for r in [Reason::Ok, Reason::ProtectedObject, Reason::GuardObject, Reason::DictionaryView, Reason::DisabledPassthrough] {
            assert_eq!(r.as_str().parse::<Reason>().unwrap(), r);
        }
    }

    #[test]
    fn unguarded_name_count_tracks_edits() {
        let mut reg = registry();
        let base = reg.unguarded_names();
        let body = ObjectRef::new("HR", ObjectType::PackageBody, "EMP_ACTIONS");
        reg.push(ProtectedObject { object: body.clone(), added_at: ts(2024, 1, 1, 0, 0), guard_owned: false });
        let naive = |r: &Registry| {
            let mut keys: Vec<_> = r.entries().iter().filter(|e| !e.guard_owned).map(|e| (e.object.owner.clone(), e.object.name.clone())).collect();
            keys.sort();
            keys.dedup();
            keys.len()
        };
        assert_eq!(reg.unguarded_names(), naive(&reg));
        assert_eq!(reg.unguarded_names(), base.max(1));
        reg.remove_exact(&body);
        assert_eq!(reg.unguarded_names(), naive(&reg));
        reg.remove_exact(&emp_actions());
        assert_eq!(reg.unguarded_names(), naive(&reg));
    }
}
