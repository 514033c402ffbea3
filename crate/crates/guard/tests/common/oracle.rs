//! A deliberately naive reference for the guard's decisions, written from the
//! rules alone and sharing no code with the library.

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};

pub const GUARD_NAMES: [&str; 6] = ["SECURITY_OBJECT", "USER_PERMISSION", "P_CONFIG", "KILLED_SESSIONS", "DDL_LOG", "GUARD_PKG"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Obj {
    pub owner: String,
    pub ty: String,
    pub name: String,
}

impl Obj {
    pub fn new(owner: &str, ty: &str, name: &str) -> Obj {
        Obj { owner: owner.into(), ty: ty.into(), name: name.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveGrant {
    pub user: String,
    pub obj: Obj,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub hours: Option<(u32, u32)>,
}

impl NaiveGrant {
    pub fn always(user: &str, obj: Obj) -> NaiveGrant {
        NaiveGrant { user: user.into(), obj, start_date: None, end_date: None, hours: None }
    }
}

/// What the test generator knows about a statement it wrote.
#[derive(Debug, Clone)]
pub struct StmtFacts {
    /// "DDL", "DML", "QUERY" or "OTHER".
    pub class: &'static str,
    pub targets: Vec<Obj>,
    pub reads_dictionary: bool,
}

fn same_object(a: &Obj, b: &Obj) -> bool {
    if a.owner != b.owner || a.name != b.name {
        return false;
    }
    let pkg = |t: &str| t == "PACKAGE" || t == "PACKAGE_BODY";
    a.ty == b.ty || a.ty == "UNKNOWN" || b.ty == "UNKNOWN" || (pkg(&a.ty) && pkg(&b.ty))
}

pub fn is_guard(o: &Obj) -> bool {
    o.owner == "GUARD" && GUARD_NAMES.contains(&o.name.as_str())
}

/// Allowed hours of a window, listed one by one.
fn allowed_hours(start: u32, end: u32) -> Vec<u32> {
    let mut hours = Vec::new();
    let mut h = start;
    while h != end {
        hours.push(h);
        h = (h + 1) % 24;
    }
    hours
}

pub fn naive_active(g: &NaiveGrant, at: DateTime<Utc>) -> bool {
    let day = (at.year(), at.month(), at.day());
    if let Some(s) = g.start_date {
        if day < (s.year(), s.month(), s.day()) {
            return false;
        }
    }
    if let Some(e) = g.end_date {
        if day > (e.year(), e.month(), e.day()) {
            return false;
        }
    }
    match g.hours {
        None => true,
        Some((s, e)) => allowed_hours(s, e).contains(&at.hour()),
    }
}

fn granted(user: &str, obj: &Obj, grants: &[NaiveGrant], at: DateTime<Utc>) -> bool {
    grants.iter().any(|g| g.user == user && same_object(&g.obj, obj) && naive_active(g, at))
}

/// `(verdict, reason)` as strings.
pub fn naive_decide(
    user: &str,
    stmt: &StmtFacts,
    protected: &[Obj],
    grants: &[NaiveGrant],
    enabled: bool,
    at: DateTime<Utc>,
) -> (&'static str, &'static str) {
    for t in &stmt.targets {
        if is_guard(t) {
            return ("KILL", "GUARD_OBJECT");
        }
    }
    if !enabled {
        return ("ALLOW", "DISABLED_PASSTHROUGH");
    }
    if stmt.reads_dictionary {
        for p in protected {
            if !is_guard(p) && !granted(user, p, grants, at) {
                return ("KILL", "DICTIONARY_VIEW");
            }
        }
    }
    if stmt.class == "DDL" || stmt.class == "DML" {
        for t in &stmt.targets {
            for p in protected {
                if same_object(t, p) && !granted(user, p, grants, at) {
                    return ("KILL", "PROTECTED_OBJECT");
                }
            }
        }
    }
    ("ALLOW", "OK")
}
