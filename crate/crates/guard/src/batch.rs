//! Bulk classification and decisions over many statements, data-parallel
//! when the `parallel` feature is on.

use chrono::{DateTime, Utc};

use crate::classifier::{Classifier, ParsedStatement};
use crate::policy::{decide, Decision, GrantSet, GuardConfig, Registry};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One statement to judge: who runs it and what it says.
#[derive(Debug, Clone)]
pub struct Request<'a> {
    pub user: &'a str,
    pub is_dba: bool,
    pub stmt: &'a ParsedStatement,
}

pub fn classify_all(classifier: &Classifier, texts: &[String], schema: &str) -> Vec<ParsedStatement> {
    #[cfg(feature = "parallel")]
    {
        texts.par_iter().map(|t| classifier.classify(t, schema)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        classify_all_sequential(classifier, texts, schema)
    }
}

pub fn classify_all_sequential(classifier: &Classifier, texts: &[String], schema: &str) -> Vec<ParsedStatement> {
    texts.iter().map(|t| classifier.classify(t, schema)).collect()
}

pub fn decide_all(
    requests: &[Request<'_>],
    registry: &Registry,
    grants: &GrantSet,
    cfg: &GuardConfig,
    at: DateTime<Utc>,
) -> Vec<Decision> {
    #[cfg(feature = "parallel")]
    {
        requests
            .par_iter()
            .map(|r| decide(r.user, r.is_dba, r.stmt, registry, grants, cfg, at))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        decide_all_sequential(requests, registry, grants, cfg, at)
    }
}

pub fn decide_all_sequential(
    requests: &[Request<'_>],
    registry: &Registry,
    grants: &GrantSet,
    cfg: &GuardConfig,
    at: DateTime<Utc>,
) -> Vec<Decision> {
    requests
        .iter()
        .map(|r| decide(r.user, r.is_dba, r.stmt, registry, grants, cfg, at))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admin::AdminState;
    use crate::classifier::ObjectType;

    #[test]
    fn parallel_matches_sequential() {
        let mut state = AdminState::initial("password1", None, Utc::now()).unwrap();
        state.add_object("HR", ObjectType::Package, "EMP_ACTIONS", Utc::now()).unwrap();
        let texts: Vec<String> = (0..500)
            .map(|i| match i % 4 {
                0 => "DROP PACKAGE hr.emp_actions".to_string(),
                1 => format!("SELECT {i} FROM dual"),
                2 => "DELETE FROM guard.ddl_log".to_string(),
                _ => "SELECT text FROM user_source".to_string(),
            })
            .collect();
        let c = Classifier::default();
        let stmts = classify_all(&c, &texts, "HR");
        assert_eq!(stmts, classify_all_sequential(&c, &texts, "HR"));
        let reqs: Vec<Request<'_>> = stmts.iter().map(|s| Request { user: "HR", is_dba: false, stmt: s }).collect();
        let now = Utc::now();
        assert_eq!(
            decide_all(&reqs, &state.registry, &state.grants, &state.config, now),
            decide_all_sequential(&reqs, &state.registry, &state.grants, &state.config, now)
        );
    }
}
