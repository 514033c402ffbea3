//! A mock database: an object catalog with stored sources, a fixed user list,
//! the `*_SOURCE` dictionary views, and acknowledgement-only execution.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::classifier::{
    normalize_identifier, ClassifyError, Classifier, ObjectRef, ObjectType, ParsedStatement, StatementClass,
};
use crate::lexer::{tokenize, Token, TokenKind};
use crate::script::split_script;
use crate::wrap::{is_create_statement, is_wrapped_text, wrap_unit, WrapError};

pub const USERS_FILE: &str = "users.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogObject {
    pub object: ObjectRef,
    pub source: String,
    pub wrapped: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbUser {
    pub name: String,
    pub is_dba: bool,
    pub default_schema: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecResult {
    Ack,
    Rows(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("object {0} does not exist")]
    NoSuchObject(ObjectRef),
    #[error("object {0} already exists")]
    DuplicateObject(ObjectRef),
    #[error("unknown dictionary view {0}")]
    UnknownView(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("{0}")]
    Rejected(ClassifyError),
}

impl CatalogError {
    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::NoSuchObject(_) => "no_such_object",
            CatalogError::DuplicateObject(_) => "duplicate_object",
            CatalogError::UnknownView(_) => "unknown_view",
            CatalogError::UnknownColumn(_) => "unknown_column",
            CatalogError::Rejected(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CreateWrappedError {
    #[error(transparent)]
    Wrap(#[from] WrapError),
    #[error("create failed: {0}")]
    CreateFailure(CatalogError),
}

#[derive(Debug, Error)]
pub enum UsersFileError {
    #[error("cannot read users file: {0}")]
    Io(#[from] io::Error),
    #[error("users file line {line}: {detail}")]
    Invalid { line: usize, detail: String },
}

#[derive(Debug, Error)]
#[error("seed statement at line {line}: {source}")]
pub struct SeedError {
    pub line: usize,
    pub source: CatalogError,
}

/// Parses `users.tsv`: `name<TAB>is_dba(0|1)<TAB>default_schema` per line.
/// Blank lines and `#` comments are ignored, as is a leading `name` header.
pub fn parse_users(text: &str) -> Result<Vec<DbUser>, UsersFileError> {
    let mut users: Vec<DbUser> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if users.is_empty() && cols.first().is_some_and(|c| c.eq_ignore_ascii_case("name")) {
            continue;
        }
        let invalid = |detail: String| UsersFileError::Invalid { line, detail };
        let [name, dba, schema] = cols.as_slice() else {
            return Err(invalid(format!("expected 3 tab-separated columns, found {}", cols.len())));
        };
        let name = normalize_identifier(name).map_err(|e| invalid(e.to_string()))?;
        let is_dba = match *dba {
            "0" => false,
            "1" => true,
            other => return Err(invalid(format!("is_dba must be 0 or 1, found {other:?}"))),
        };
        let default_schema = normalize_identifier(schema).map_err(|e| invalid(e.to_string()))?;
        if users.iter().any(|u| u.name == name) {
            return Err(invalid(format!("duplicate user {name}")));
        }
        users.push(DbUser { name, is_dba, default_schema });
    }
    Ok(users)
}

pub fn load_users(path: &Path) -> Result<Vec<DbUser>, UsersFileError> {
    parse_users(&fs::read_to_string(path)?)
}

#[derive(Debug)]
pub struct Catalog {
    users: HashMap<String, DbUser>,
    objects: Mutex<BTreeMap<ObjectRef, CatalogObject>>,
    executed: AtomicU64,
}

impl Catalog {
    pub fn new(users: Vec<DbUser>) -> Self {
        Catalog {
            users: users.into_iter().map(|u| (u.name.clone(), u)).collect(),
            objects: Mutex::new(BTreeMap::new()),
            executed: AtomicU64::new(0),
        }
    }

    pub fn user(&self, name: &str) -> Option<&DbUser> {
        self.users.get(name)
    }

    pub fn users(&self) -> impl Iterator<Item = &DbUser> {
        self.users.values()
    }

    /// Number of statements that reached `execute`.
    pub fn executed(&self) -> u64 {
        self.executed.load(Ordering::SeqCst)
    }

    pub fn objects(&self) -> Vec<CatalogObject> {
        self.lock().values().cloned().collect()
    }

    pub fn get(&self, r: &ObjectRef) -> Option<CatalogObject> {
        self.lock().get(r).cloned()
    }

    /// Sorted `(ref, source)` pairs, for comparing catalogs without timestamps.
    pub fn contents(&self) -> Vec<(ObjectRef, String)> {
        self.lock().iter().map(|(k, v)| (k.clone(), v.source.clone())).collect()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<ObjectRef, CatalogObject>> {
        self.objects.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Applies a statement the policy already admitted.
    pub fn execute(&self, stmt: &ParsedStatement, user: &DbUser, now: DateTime<Utc>) -> Result<ExecResult, CatalogError> {
        self.executed.fetch_add(1, Ordering::SeqCst);
        if let Some(defect) = &stmt.defect {
            return Err(CatalogError::Rejected(defect.clone()));
        }
        match stmt.class {
            StatementClass::Ddl => self.execute_ddl(stmt, now),
            StatementClass::Query => self.execute_query(stmt, user),
            _ if matches!(stmt.verb.as_str(), "CALL" | "EXEC" | "EXECUTE") => self.execute_call(stmt),
            StatementClass::Dml | StatementClass::SessionCtrl | StatementClass::Other => Ok(ExecResult::Ack),
        }
    }

    fn execute_ddl(&self, stmt: &ParsedStatement, now: DateTime<Utc>) -> Result<ExecResult, CatalogError> {
        let Some(target) = stmt.targets.first() else { return Ok(ExecResult::Ack) };
        match stmt.verb.as_str() {
            "CREATE" => {
                let source = created_source(&stmt.raw);
                let mut objects = self.lock();
                if objects.contains_key(target) && !stmt.is_or_replace {
                    return Err(CatalogError::DuplicateObject(target.clone()));
                }
                let wrapped = is_wrapped_text(&source);
                objects.insert(
                    target.clone(),
                    CatalogObject { object: target.clone(), source, wrapped, created_at: now },
                );
                Ok(ExecResult::Ack)
            }
            "DROP" => {
                let mut objects = self.lock();
                let doomed: Vec<ObjectRef> = objects
                    .keys()
                    .filter(|k| {
                        k.owner == target.owner
                            && k.name == target.name
                            && (k.obj_type == target.obj_type
                                || target.obj_type == ObjectType::Unknown
                                || (target.obj_type == ObjectType::Package && k.obj_type == ObjectType::PackageBody))
                    })
                    .cloned()
                    .collect();
                if doomed.is_empty() {
                    return Err(CatalogError::NoSuchObject(target.clone()));
                }
                for k in doomed {
                    objects.remove(&k);
                }
                Ok(ExecResult::Ack)
            }
            _ => Ok(ExecResult::Ack),
        }
    }

    fn execute_call(&self, stmt: &ParsedStatement) -> Result<ExecResult, CatalogError> {
        let objects = self.lock();
        let found = stmt.targets.iter().any(|t| objects.keys().any(|k| k.owner == t.owner && k.name == t.name));
        match stmt.targets.first() {
            Some(first) if !found => Err(CatalogError::NoSuchObject(first.clone())),
            _ => Ok(ExecResult::Ack),
        }
    }

    fn execute_query(&self, stmt: &ParsedStatement, user: &DbUser) -> Result<ExecResult, CatalogError> {
        let Some(view) = stmt.dictionary_refs.first() else { return Ok(ExecResult::Rows(Vec::new())) };
        let query = SourceQuery::parse(&stmt.raw);
        let rows = self.query_source_view(view, user, query.name_filter.as_deref())?;
        let columns = match query.columns {
            Some(cols) => cols,
            None if view == "USER_SOURCE" => vec!["NAME".into(), "TYPE".into(), "LINE".into(), "TEXT".into()],
            None => vec!["OWNER".into(), "NAME".into(), "TYPE".into(), "LINE".into(), "TEXT".into()],
        };
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let mut cells = Vec::with_capacity(columns.len());
            for col in &columns {
                cells.push(match col.as_str() {
                    "OWNER" => row.owner.clone(),
                    "NAME" => row.name.clone(),
                    "TYPE" => row.obj_type.clone(),
                    "LINE" => row.line.to_string(),
                    "TEXT" => row.text.clone(),
                    other => return Err(CatalogError::UnknownColumn(other.to_string())),
                });
            }
            out.push(cells);
        }
        Ok(ExecResult::Rows(out))
    }

    /// Rows of a `*_SOURCE` view, ordered by owner, name, type, line.
    pub fn query_source_view(
        &self,
        view: &str,
        user: &DbUser,
        name_filter: Option<&str>,
    ) -> Result<Vec<SourceRow>, CatalogError> {
        let owner_scope = match view {
            "USER_SOURCE" => Some(user.default_schema.as_str()),
            "ALL_SOURCE" | "DBA_SOURCE" => None,
            other => return Err(CatalogError::UnknownView(other.to_string())),
        };
        let objects = self.lock();
        let mut rows = Vec::new();
        for obj in objects.values() {
            if owner_scope.is_some_and(|o| o != obj.object.owner) {
                continue;
            }
            if name_filter.is_some_and(|n| n != obj.object.name) {
                continue;
            }
            if !obj.object.obj_type.has_source() {
                continue;
            }
            let ty = obj.object.obj_type.as_str().replace('_', " ");
            for (i, text) in obj.source.lines().enumerate() {
                rows.push(SourceRow {
                    owner: obj.object.owner.clone(),
                    name: obj.object.name.clone(),
                    obj_type: ty.clone(),
                    line: i + 1,
                    text: text.to_string(),
                });
            }
        }
        Ok(rows)
    }

    /// Wraps `source` and installs the wrapped unit in `schema`.
    pub fn create_wrapped(
        &self,
        classifier: &Classifier,
        schema: &str,
        source: &str,
        now: DateTime<Utc>,
    ) -> Result<ObjectRef, CreateWrappedError> {
        if !is_create_statement(source)? {
            return Err(WrapError::UnrecognizedUnit.into());
        }
        let unit = wrap_unit(source)?;
        let or_replace = classifier.classify(source, schema).is_or_replace;
        let ddl = format!("CREATE {}{}", if or_replace { "OR REPLACE " } else { "" }, unit.to_text());
        let stmt = classifier.classify(&ddl, schema);
        let target = stmt.targets.first().cloned().ok_or(WrapError::UnrecognizedUnit)?;
        self.execute_ddl(&stmt, now).map_err(CreateWrappedError::CreateFailure)?;
        Ok(target)
    }

    /// Runs a bootstrap script without consulting the policy.
    pub fn run_seed(&self, classifier: &Classifier, text: &str, schema: &str, now: DateTime<Utc>) -> Result<usize, SeedError> {
        let stmts = split_script(text).map_err(|e| SeedError {
            line: 1,
            source: CatalogError::Rejected(ClassifyError::MalformedStatement(e)),
        })?;
        let seeder = DbUser { name: schema.to_string(), is_dba: true, default_schema: schema.to_string() };
        for s in &stmts {
            let parsed = classifier.classify(s.text, schema);
            self.execute(&parsed, &seeder, now).map_err(|source| SeedError { line: s.line, source })?;
        }
        Ok(stmts.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRow {
    pub owner: String,
    pub name: String,
    pub obj_type: String,
    pub line: usize,
    pub text: String,
}

/// Stored source for a CREATE: everything from the object-type keyword on,
/// minus a trailing `;` on plain statements.
fn created_source(raw: &str) -> String {
    let Ok(tokens) = tokenize(raw) else { return raw.trim().to_string() };
    let sig: Vec<&Token<'_>> = tokens.iter().filter(|t| !t.is_trivia()).collect();
    let mut i = 1;
    if sig.get(i).is_some_and(|t| t.is_keyword("OR")) && sig.get(i + 1).is_some_and(|t| t.is_keyword("REPLACE")) {
        i += 2;
    }
    while sig.get(i).is_some_and(|t| {
        t.is_keyword("EDITIONABLE") || t.is_keyword("NONEDITIONABLE") || t.is_keyword("FORCE") || t.is_keyword("NOFORCE")
    }) {
        i += 1;
    }
    let start = sig.get(i).map_or(0, |t| t.span.start);
    let body = raw[start..].trim_end();
    let is_unit = sig.get(i).is_some_and(|t| {
        ["PROCEDURE", "FUNCTION", "PACKAGE", "TRIGGER", "TYPE"].iter().any(|k| t.is_keyword(k))
    });
    if is_unit {
        body.to_string()
    } else {
        body.strip_suffix(';').unwrap_or(body).trim_end().to_string()
    }
}

/// The parts of a `SELECT ... FROM <view> [WHERE name = '...']` the mock
/// honors.
struct SourceQuery {
    columns: Option<Vec<String>>,
    name_filter: Option<String>,
}

impl SourceQuery {
    fn parse(raw: &str) -> SourceQuery {
        let tokens = tokenize(raw).unwrap_or_default();
        let sig: Vec<&Token<'_>> = tokens.iter().filter(|t| !t.is_trivia()).collect();
        let from = sig.iter().position(|t| t.is_keyword("FROM")).unwrap_or(sig.len());
        let mut columns = Vec::new();
        let mut star = false;
        for t in sig.iter().take(from).skip(1) {
            if t.is_symbol("*") {
                star = true;
            } else if matches!(t.kind, TokenKind::Identifier | TokenKind::Keyword | TokenKind::QuotedIdentifier)
                && !t.is_keyword("DISTINCT")
            {
                columns.push(t.value());
            }
        }
        let mut name_filter = None;
        if let Some(w) = sig.iter().position(|t| t.is_keyword("WHERE")) {
            for win in sig[w..].windows(3) {
                if win[0].kind == TokenKind::Identifier
                    && win[0].value() == "NAME"
                    && win[1].is_symbol("=")
                    && win[2].kind == TokenKind::StringLiteral
                {
                    let lit = win[2].lexeme;
                    name_filter = Some(lit[1..lit.len() - 1].replace("''", "'"));
                    break;
                }
            }
        }
        SourceQuery { columns: if star || columns.is_empty() { None } else { Some(columns) }, name_filter }
    }
}
