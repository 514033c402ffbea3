//! Random admin operation sequences checked against a plain reference model,
//! then reloaded from disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use chrono::NaiveDate;
use proptest::prelude::*;

use plsql_guard::admin::{load_state, AdminControl, AdminError, FileOutbox, GrantWindow};
use plsql_guard::classifier::ObjectType;
use plsql_guard::policy::{guard_object_refs, is_guard_object};

const START_PW: &str = "first-password";

type Key = (String, String, String);

#[derive(Debug, Clone)]
enum Op {
    Add(usize, usize, usize),
    Remove(usize, usize, usize),
    Grant(usize, usize, usize, usize, Option<(u8, u8)>, Option<(u32, u32)>),
    Revoke(usize, usize, usize, usize),
    Security(bool, bool),
    Password(bool, usize),
}

const OWNERS: [&str; 3] = ["hr", "SCOTT", "guard"];
const TYPES: [ObjectType; 3] = [ObjectType::Table, ObjectType::Package, ObjectType::Procedure];
const NAMES: [&str; 4] = ["employees", "EMP_ACTIONS", "ddl_log", "p_config"];
const USERS: [&str; 3] = ["scott", "HR", "adams"];
const PASSWORDS: [&str; 3] = ["second-password", "third-password", "tiny"];

fn op() -> impl Strategy<Value = Op> {
    let obj = (0..OWNERS.len(), 0..TYPES.len(), 0..NAMES.len());
    prop_oneof![
        3 => obj.clone().prop_map(|(o, t, n)| Op::Add(o, t, n)),
        1 => obj.clone().prop_map(|(o, t, n)| Op::Remove(o, t, n)),
        3 => (0..USERS.len(), obj.clone(), proptest::option::of((0u8..25, 0u8..24)), proptest::option::of((1u32..29, 1u32..29)))
            .prop_map(|(u, (o, t, n), h, d)| Op::Grant(u, o, t, n, h, d)),
        1 => (0..USERS.len(), obj).prop_map(|(u, (o, t, n))| Op::Revoke(u, o, t, n)),
        1 => (any::<bool>(), any::<bool>()).prop_map(|(good, on)| Op::Security(good, on)),
        1 => (any::<bool>(), 0..PASSWORDS.len()).prop_map(|(good, p)| Op::Password(good, p)),
    ]
}

/// Reference model: plain maps, no indexes.
#[derive(Debug, Default)]
struct Model {
    objects: BTreeSet<Key>,
    grants: BTreeMap<(String, Key), GrantWindow>,
    enabled: bool,
    password: String,
    version: u64,
}

fn key(o: usize, t: usize, n: usize) -> Key {
    (OWNERS[o].to_uppercase(), TYPES[t].as_str().to_string(), NAMES[n].to_uppercase())
}

fn guard_key(k: &Key) -> bool {
    guard_object_refs().any(|g| g.owner == k.0 && g.name == k.2)
}

fn window(h: Option<(u8, u8)>, d: Option<(u32, u32)>) -> GrantWindow {
    let day = |x| NaiveDate::from_ymd_opt(2026, 2, x).unwrap();
    GrantWindow {
        start_hour: h.map(|x| x.0),
        end_hour: h.map(|x| x.1),
        start_date: d.map(|x| day(x.0)),
        end_date: d.map(|x| day(x.1)),
    }
}

fn window_ok(w: &GrantWindow) -> bool {
    let hours = match (w.start_hour, w.end_hour) {
        (Some(a), Some(b)) => a != b && a < 24 && b < 24,
        _ => true,
    };
    let dates = match (w.start_date, w.end_date) {
        (Some(a), Some(b)) => a <= b,
        _ => true,
    };
    hours && dates
}

impl Model {
    /// Returns whether the op should succeed, applying it if so.
    fn apply(&mut self, op: &Op) -> bool {
        let ok = match op {
            Op::Add(o, t, n) => {
                let k = key(*o, *t, *n);
                !guard_key(&k) && self.objects.insert(k)
            }
            Op::Remove(o, t, n) => {
                let k = key(*o, *t, *n);
                !guard_key(&k) && self.objects.remove(&k)
            }
            Op::Grant(u, o, t, n, h, d) => {
                let k = key(*o, *t, *n);
                let w = window(*h, *d);
                let gk = (USERS[*u].to_uppercase(), k.clone());
                let ok = !guard_key(&k) && self.objects.contains(&k) && window_ok(&w) && !self.grants.contains_key(&gk);
                if ok {
                    self.grants.insert(gk, w);
                }
                ok
            }
            Op::Revoke(u, o, t, n) => self.grants.remove(&(USERS[*u].to_uppercase(), key(*o, *t, *n))).is_some(),
            Op::Security(good, on) => {
                if *good {
                    self.enabled = *on;
                }
                *good
            }
            Op::Password(good, p) => {
                let ok = *good && PASSWORDS[*p].len() >= 8;
                if ok {
                    self.password = PASSWORDS[*p].to_string();
                }
                ok
            }
        };
        if ok {
            self.version += 1;
        }
        ok
    }
}

fn run(ctl: &AdminControl, model: &Model, op: &Op) -> Result<(), AdminError> {
    let wrong = "not-the-password";
    let pw = model.password.as_str();
    match op {
        Op::Add(o, t, n) => ctl.add_object(OWNERS[*o], TYPES[*t], NAMES[*n]),
        Op::Remove(o, t, n) => ctl.remove_object(OWNERS[*o], TYPES[*t], NAMES[*n]),
        Op::Grant(u, o, t, n, h, d) => ctl.grant_permission(USERS[*u], OWNERS[*o], TYPES[*t], NAMES[*n], window(*h, *d)),
        Op::Revoke(u, o, t, n) => ctl.revoke_permission(USERS[*u], OWNERS[*o], TYPES[*t], NAMES[*n]),
        Op::Security(good, on) => ctl.set_security(if *good { pw } else { wrong }, *on),
        Op::Password(good, p) => ctl.set_password(if *good { pw } else { wrong }, PASSWORDS[*p]),
    }
    .map(|_| ())
}

fn snapshot_objects(ctl: &AdminControl) -> (BTreeSet<Key>, usize) {
    let state = ctl.snapshot();
    let mut user = BTreeSet::new();
    let mut guard = 0;
    for e in state.registry.entries() {
        if e.guard_owned {
            assert!(is_guard_object(&e.object));
            guard += 1;
        } else {
            user.insert((e.object.owner.clone(), e.object.obj_type.as_str().to_string(), e.object.name.clone()));
        }
    }
    (user, guard)
}

fn snapshot_grants(ctl: &AdminControl) -> BTreeMap<(String, Key), GrantWindow> {
    ctl.snapshot()
        .grants
        .grants()
        .iter()
        .map(|g| {
            let k = (g.object.owner.clone(), g.object.obj_type.as_str().to_string(), g.object.name.clone());
            let w = GrantWindow { start_date: g.start_date, end_date: g.end_date, start_hour: g.start_hour, end_hour: g.end_hour };
            ((g.grantee.clone(), k), w)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_reference_model(ops in proptest::collection::vec(op(), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let state = dir.path().join("state");
        plsql_guard::admin::initialize_state(&state, START_PW, None).unwrap();
        let ctl = AdminControl::open(&state, Box::new(FileOutbox::new(dir.path().join("outbox"))), "officer").unwrap();
        let mut model = Model { enabled: true, password: START_PW.into(), ..Model::default() };
        let guard_count = guard_object_refs().count();

        for op in &ops {
            let got = run(&ctl, &model, op);
            let want = model.apply(op);
            prop_assert_eq!(got.is_ok(), want, "{:?} -> {:?}", op, got);
            let (objects, guard) = snapshot_objects(&ctl);
            prop_assert_eq!(guard, guard_count);
            prop_assert_eq!(&objects, &model.objects);
        }
        prop_assert_eq!(snapshot_grants(&ctl), model.grants.clone());
        prop_assert_eq!(ctl.snapshot().config.enabled, model.enabled);
        prop_assert_eq!(ctl.snapshot().version, model.version);
        prop_assert!(ctl.authenticate(&model.password));

        // persisted copy is identical and never holds a password
        let reloaded = load_state(&state).unwrap();
        prop_assert_eq!(&reloaded, &*ctl.snapshot());
        for entry in fs::read_dir(&state).unwrap() {
            let text = fs::read_to_string(entry.unwrap().path()).unwrap_or_default();
            for pw in [START_PW, PASSWORDS[0], PASSWORDS[1]] {
                prop_assert!(!text.contains(pw), "plaintext password on disk");
            }
        }
    }
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    plsql_guard::admin::initialize_state(dir.path(), START_PW, None).unwrap();
    let path = dir.path().join("user_permission.tsv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen('\n', "\nHR\tHR\tTABLE\tX\t-\t-\t-\t-\n", 1)).unwrap();
    assert!(matches!(load_state(dir.path()), Err(AdminError::CorruptState(_))));

    fs::remove_file(&path).unwrap();
    assert!(matches!(load_state(dir.path()), Err(AdminError::CorruptState(_))));
}
