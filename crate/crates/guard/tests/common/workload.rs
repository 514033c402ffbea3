//! Statement generators that know, by construction, what each statement
//! touches.

use rand::seq::SliceRandom;
use rand::Rng;

use super::oracle::{Obj, StmtFacts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Drop,
    Alter,
    Grant,
    Truncate,
    CreateTable,
    Insert,
    Update,
    Delete,
    Select,
    DictQuery,
    Commit,
    Call,
}

pub const EXHAUSTIVE_VERBS: [Verb; 6] = [Verb::Drop, Verb::Alter, Verb::Grant, Verb::Insert, Verb::Update, Verb::Select];

fn keyword(ty: &str) -> String {
    ty.replace('_', " ")
}

/// SQL text for `verb` on `t`, and what the statement is known to do.
pub fn statement(verb: Verb, t: &Obj, tag: usize) -> (String, StmtFacts) {
    let q = format!("{}.{}", t.owner.to_lowercase(), t.name.to_lowercase());
    let exact = vec![t.clone()];
    let loose = vec![Obj::new(&t.owner, "UNKNOWN", &t.name)];
    let (text, class, targets, reads_dictionary) = match verb {
        Verb::Drop => (format!("DROP {} {q}", keyword(&t.ty)), "DDL", exact, false),
        Verb::Alter if t.ty == "TABLE" => (format!("ALTER TABLE {q} ADD (c{tag} NUMBER)"), "DDL", exact, false),
        Verb::Alter => (format!("ALTER {} {q} COMPILE", keyword(&t.ty)), "DDL", exact, false),
        Verb::Grant => (format!("GRANT SELECT ON {q} TO PUBLIC"), "DDL", loose, false),
        Verb::Truncate => (format!("TRUNCATE TABLE {q}"), "DDL", vec![Obj::new(&t.owner, "TABLE", &t.name)], false),
        Verb::CreateTable => {
            let name = format!("T_{tag}");
            let text = format!("CREATE TABLE {}.{} (a NUMBER)", t.owner.to_lowercase(), name.to_lowercase());
            (text, "DDL", vec![Obj::new(&t.owner, "TABLE", &name)], false)
        }
        Verb::Insert => (format!("INSERT INTO {q} VALUES ({tag})"), "DML", loose, false),
        Verb::Update => (format!("UPDATE {q} SET c = {tag}"), "DML", loose, false),
        Verb::Delete => (format!("DELETE FROM {q} WHERE c = {tag}"), "DML", loose, false),
        Verb::Select => (format!("SELECT * FROM {q} WHERE c = {tag}"), "QUERY", loose, false),
        Verb::DictQuery => (format!("SELECT text FROM USER_SOURCE WHERE name = '{}'", t.name), "QUERY", vec![], true),
        Verb::Commit => ("COMMIT".to_string(), "OTHER", vec![], false),
        Verb::Call => (format!("CALL {q}({tag})"), "OTHER", vec![], false),
    };
    (format!("{text} /* #{tag} */"), StmtFacts { class, targets, reads_dictionary })
}

/// Objects the generated workloads act on: `(object, protected)`.
pub fn workload_objects() -> Vec<(Obj, bool)> {
    vec![
        (Obj::new("HR", "PACKAGE", "EMP_ACTIONS"), true),
        (Obj::new("HR", "PACKAGE_BODY", "EMP_ACTIONS"), false),
        (Obj::new("HR", "TABLE", "EMPLOYEES"), true),
        (Obj::new("SCOTT", "TABLE", "BONUS"), true),
        (Obj::new("HR", "PROCEDURE", "RAISE"), true),
        (Obj::new("ADAMS", "TABLE", "NOTES"), false),
        (Obj::new("GUARD", "TABLE", "DDL_LOG"), false),
        (Obj::new("GUARD", "TABLE", "P_CONFIG"), false),
    ]
}

/// Seed script creating the workload objects.
pub const WORKLOAD_SEED: &str = "CREATE TABLE hr.employees (employee_id NUMBER, salary NUMBER);
CREATE TABLE scott.bonus (c NUMBER);
CREATE TABLE adams.notes (c NUMBER);
CREATE PACKAGE hr.emp_actions AS
  PROCEDURE raise_salary (emp_id NUMBER, amount NUMBER);
END emp_actions;
/
CREATE PACKAGE BODY hr.emp_actions AS
  PROCEDURE raise_salary (emp_id NUMBER, amount NUMBER) IS
  BEGIN
    UPDATE employees SET salary = salary + amount WHERE employee_id = emp_id;
  END raise_salary;
END emp_actions;
/
CREATE PROCEDURE hr.raise AS BEGIN NULL; END;
/
";

pub fn random_statement<R: Rng>(rng: &mut R, tag: usize) -> (String, StmtFacts) {
    let objects = workload_objects();
    let (obj, _) = objects.choose(rng).unwrap();
    let verbs: &[Verb] = if obj.ty == "TABLE" {
        &[
            Verb::Drop, Verb::Alter, Verb::Grant, Verb::Truncate, Verb::CreateTable, Verb::Insert, Verb::Update,
            Verb::Delete, Verb::Select, Verb::DictQuery, Verb::Commit,
        ]
    } else {
        &[Verb::Drop, Verb::Alter, Verb::Grant, Verb::CreateTable, Verb::Select, Verb::DictQuery, Verb::Commit, Verb::Call]
    };
    statement(*verbs.choose(rng).unwrap(), obj, tag)
}
