#![allow(dead_code)]

pub mod oracle;
pub mod workload;

use std::fs;
use std::path::PathBuf;

use plsql_guard::admin::initialize_state;
use plsql_guard::config::ServerConfig;
use plsql_guard::server::{system_clock, Clock, RunningServer, Server};

pub const PASSWORD: &str = "s3cret-guard";

pub const USERS: &str = "name\tis_dba\tdefault_schema\nSYS\t1\tSYS\nSYSTEM\t1\tSYSTEM\nHR\t0\tHR\nSCOTT\t0\tSCOTT\nADAMS\t0\tADAMS\n";

pub const EMP_SPEC: &str = "CREATE PACKAGE emp_actions AS\n\n        PROCEDURE raise_salary (emp_id NUMBER,\n                                amount NUMBER);\n\n        PROCEDURE fire_employee (emp_id NUMBER);\n\n    END emp_actions;";

pub const EMP_BODY: &str = "CREATE PACKAGE BODY emp_actions AS\n        PROCEDURE raise_salary (emp_id NUMBER,\n                                amount NUMBER) IS\n            BEGIN\n\n                UPDATE employees\n                SET salary = salary + amount\n                WHERE employee_id = emp_id;\n\n            END raise_salary;\n\n        PROCEDURE fire_employee (emp_id NUMBER) IS\n            BEGIN\n\n                DELETE FROM employees WHERE employee_id = emp_id;\n\n            END fire_employee;\n\n    END emp_actions;";

/// A state directory, users file and seed script under one temp dir.
pub struct Env {
    pub dir: tempfile::TempDir,
    pub cfg: ServerConfig,
}

impl Env {
    pub fn new() -> Env {
        Env::with_seed("CREATE TABLE hr.employees (employee_id NUMBER, salary NUMBER);\n")
    }

    pub fn with_seed(seed: &str) -> Env {
        let dir = tempfile::tempdir().unwrap();
        let users = dir.path().join("users.tsv");
        fs::write(&users, USERS).unwrap();
        let state = dir.path().join("state");
        initialize_state(&state, PASSWORD, None).unwrap();
        let mut cfg = ServerConfig::for_state_dir(&state, users);
        if !seed.is_empty() {
            let path = dir.path().join("seed_objects.sql");
            fs::write(&path, seed).unwrap();
            cfg.seed_sql = Some(path);
        }
        Env { dir, cfg }
    }

    pub fn state_dir(&self) -> PathBuf {
        self.cfg.state_dir.clone()
    }

    pub fn start(&self) -> RunningServer {
        self.start_with_clock(system_clock())
    }

    pub fn start_with_clock(&self, clock: Clock) -> RunningServer {
        Server::bind(&self.cfg, clock).unwrap().spawn()
    }
}
