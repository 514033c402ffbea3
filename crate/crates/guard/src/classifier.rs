//! Statement classification.
//!
//! `classify` turns one SQL statement into a [`ParsedStatement`]: its class,
//! leading verb, the objects it acts on, and any data-dictionary source views
//! it reads. There is no grammar here, only a keyword-driven walk over the
//! token stream that prefers extracting too many object names over too few.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::lexer::{tokenize, LexError, Token, TokenKind};

/// Dictionary views exposing stored PL/SQL source.
pub const DEFAULT_DICTIONARY_VIEWS: [&str; 3] = ["USER_SOURCE", "ALL_SOURCE", "DBA_SOURCE"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectType {
    Procedure,
    Function,
    Package,
    PackageBody,
    Trigger,
    Table,
    View,
    Unknown,
}

impl ObjectType {
    pub const ALL: [ObjectType; 8] = [
        ObjectType::Procedure,
        ObjectType::Function,
        ObjectType::Package,
        ObjectType::PackageBody,
        ObjectType::Trigger,
        ObjectType::Table,
        ObjectType::View,
        ObjectType::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectType::Procedure => "PROCEDURE",
            ObjectType::Function => "FUNCTION",
            ObjectType::Package => "PACKAGE",
            ObjectType::PackageBody => "PACKAGE_BODY",
            ObjectType::Trigger => "TRIGGER",
            ObjectType::Table => "TABLE",
            ObjectType::View => "VIEW",
            ObjectType::Unknown => "UNKNOWN",
        }
    }

    /// Whether two type tags may denote the same object. `UNKNOWN` matches
    /// anything, and a package spec and its body share one namespace.
    pub fn compatible(self, other: ObjectType) -> bool {
        use ObjectType::*;
        self == other
            || self == Unknown
            || other == Unknown
            || matches!((self, other), (Package, PackageBody) | (PackageBody, Package))
    }

    /// PL/SQL units are the only objects whose source is stored in the
    /// dictionary source views.
    pub fn has_source(self) -> bool {
        use ObjectType::*;
        matches!(self, Procedure | Function | Package | PackageBody | Trigger)
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown object type {0:?}")]
pub struct UnknownObjectType(pub String);

impl FromStr for ObjectType {
    type Err = UnknownObjectType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(' ', "_");
        ObjectType::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| UnknownObjectType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid identifier {0:?}")]
pub struct InvalidIdentifier(pub String);

/// Normalize an identifier given as free text (admin commands, seed files).
/// `"Quoted"` identifiers keep their case; bare ones are uppercased and may
/// only contain letters, digits, `_`, `$` and `#`.
pub fn normalize_identifier(raw: &str) -> Result<String, InvalidIdentifier> {
    let bad = || InvalidIdentifier(raw.to_string());
    if let Some(inner) = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        if inner.is_empty() || inner.replace("\"\"", "").contains('"') || inner.contains('\n') {
            return Err(bad());
        }
        return Ok(inner.replace("\"\"", "\""));
    }
    let mut chars = raw.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return Err(bad()),
    }
    if !chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '$' | '#')) {
        return Err(bad());
    }
    Ok(raw.to_ascii_uppercase())
}

/// A normalized `(owner, type, name)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectRef {
    pub owner: String,
    pub obj_type: ObjectType,
    pub name: String,
}

impl ObjectRef {
    /// Build a ref from already-normalized parts.
    pub fn new(owner: impl Into<String>, obj_type: ObjectType, name: impl Into<String>) -> Self {
        ObjectRef { owner: owner.into(), obj_type, name: name.into() }
    }

    /// Build a ref from raw user text, normalizing both identifiers.
    pub fn parse(owner: &str, obj_type: ObjectType, name: &str) -> Result<Self, InvalidIdentifier> {
        Ok(ObjectRef::new(normalize_identifier(owner)?, obj_type, normalize_identifier(name)?))
    }

    /// Same owner and name, compatible types.
    pub fn matches(&self, other: &ObjectRef) -> bool {
        self.owner == other.owner
            && self.name == other.name
            && self.obj_type.compatible(other.obj_type)
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} ({})", self.owner, self.name, self.obj_type)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatementClass {
    Ddl,
    Dml,
    Query,
    SessionCtrl,
    Other,
}

impl StatementClass {
    pub fn for_verb(verb: &str) -> StatementClass {
        match verb {
            "CREATE" | "ALTER" | "DROP" | "TRUNCATE" | "RENAME" | "GRANT" | "REVOKE"
            | "COMMENT" => StatementClass::Ddl,
            "INSERT" | "UPDATE" | "DELETE" | "MERGE" => StatementClass::Dml,
            "SELECT" => StatementClass::Query,
            "COMMIT" | "ROLLBACK" | "SAVEPOINT" | "SET" => StatementClass::SessionCtrl,
            _ => StatementClass::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StatementClass::Ddl => "DDL",
            StatementClass::Dml => "DML",
            StatementClass::Query => "QUERY",
            StatementClass::SessionCtrl => "SESSION_CTRL",
            StatementClass::Other => "OTHER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("empty statement")]
    EmptyStatement,
    #[error("malformed statement: {0}")]
    MalformedStatement(#[from] LexError),
    #[error("more than one statement in a single request")]
    MultipleStatements,
}

impl ClassifyError {
    pub fn code(&self) -> &'static str {
        match self {
            ClassifyError::EmptyStatement => "empty_statement",
            ClassifyError::MalformedStatement(_) => "malformed_statement",
            ClassifyError::MultipleStatements => "multiple_statements",
        }
    }
}

/// The classified form of one SQL statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStatement {
    pub raw: String,
    pub class: StatementClass,
    /// Leading verb, uppercased. Empty for empty or malformed input.
    pub verb: String,
    pub targets: Vec<ObjectRef>,
    pub dictionary_refs: Vec<String>,
    pub is_or_replace: bool,
    /// Set when the text could not be analysed; such statements are always
    /// class `OTHER` with no targets.
    pub defect: Option<ClassifyError>,
}

impl ParsedStatement {
    fn defective(raw: &str, err: ClassifyError) -> Self {
        ParsedStatement {
            raw: raw.to_string(),
            class: StatementClass::Other,
            verb: String::new(),
            targets: Vec::new(),
            dictionary_refs: Vec::new(),
            is_or_replace: false,
            defect: Some(err),
        }
    }
}

/// Classifier configured with the set of protected dictionary views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classifier {
    dictionary_views: BTreeSet<String>,
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier::new(DEFAULT_DICTIONARY_VIEWS.iter().map(|s| s.to_string()))
    }
}

/// Classify with the default dictionary view set.
pub fn classify(text: &str, default_schema: &str) -> ParsedStatement {
    Classifier::default().classify(text, default_schema)
}

impl Classifier {
    pub fn new(views: impl IntoIterator<Item = String>) -> Self {
        Classifier {
            dictionary_views: views.into_iter().map(|v| v.to_ascii_uppercase()).collect(),
        }
    }

    pub fn dictionary_views(&self) -> &BTreeSet<String> {
        &self.dictionary_views
    }

    pub fn classify(&self, text: &str, default_schema: &str) -> ParsedStatement {
        let tokens = match tokenize(text) {
            Ok(t) => t,
            Err(e) => return ParsedStatement::defective(text, e.into()),
        };
        let toks: Vec<Token<'_>> = tokens.into_iter().filter(|t| !t.is_trivia()).collect();
        if toks.iter().all(|t| t.is_symbol(";") || t.is_symbol("/")) {
            return ParsedStatement::defective(text, ClassifyError::EmptyStatement);
        }

        let walker = Walker { toks: &toks, schema: default_schema };
        let lead = walker.leading_verb();
        let block = is_block_statement(&toks);

        if !block && walker.has_trailing_statement() {
            return ParsedStatement::defective(text, ClassifyError::MultipleStatements);
        }

        let class = StatementClass::for_verb(&lead);
        let mut stmt = ParsedStatement {
            raw: text.to_string(),
            class,
            verb: lead.clone(),
            targets: Vec::new(),
            dictionary_refs: Vec::new(),
            is_or_replace: false,
            defect: None,
        };

        if matches!(lead.as_str(), "DECLARE" | "BEGIN") {
            // anonymous blocks are opaque
            return stmt;
        }

        let sources = walker.source_names();
        for (_, name) in &sources {
            if self.dictionary_views.contains(name) && !stmt.dictionary_refs.contains(name) {
                stmt.dictionary_refs.push(name.clone());
            }
        }

        match class {
            StatementClass::Ddl => {
                let (targets, or_replace) = walker.ddl_targets(&lead);
                stmt.targets = targets;
                stmt.is_or_replace = or_replace;
            }
            StatementClass::Dml | StatementClass::Query => {
                stmt.targets = sources
                    .into_iter()
                    .map(|(owner, name)| ObjectRef::new(owner, ObjectType::Unknown, name))
                    .collect();
            }
            StatementClass::Other if matches!(lead.as_str(), "CALL" | "EXEC" | "EXECUTE") => {
                stmt.targets = walker.call_targets();
            }
            _ => {}
        }
        dedup(&mut stmt.targets);
        stmt
    }
}

fn dedup(refs: &mut Vec<ObjectRef>) {
    let mut seen = BTreeSet::new();
    refs.retain(|r| seen.insert(r.clone()));
}

/// PL/SQL units and anonymous blocks contain their own semicolons.
pub(crate) fn is_block_statement(toks: &[Token<'_>]) -> bool {
    let mut i = 0;
    let first = match toks.first() {
        Some(t) => t,
        None => return false,
    };
    if first.is_keyword("DECLARE") || first.is_keyword("BEGIN") {
        return true;
    }
    if !first.is_keyword("CREATE") {
        return false;
    }
    i += 1;
    if toks.get(i).is_some_and(|t| t.is_keyword("OR"))
        && toks.get(i + 1).is_some_and(|t| t.is_keyword("REPLACE"))
    {
        i += 2;
    }
    while toks
        .get(i)
        .is_some_and(|t| t.is_keyword("EDITIONABLE") || t.is_keyword("NONEDITIONABLE"))
    {
        i += 1;
    }
    toks.get(i).is_some_and(|t| {
        ["PROCEDURE", "FUNCTION", "PACKAGE", "TRIGGER", "TYPE"].iter().any(|k| t.is_keyword(k))
    })
}

const CREATE_MODIFIERS: &[&str] = &[
    "EDITIONABLE",
    "NONEDITIONABLE",
    "FORCE",
    "NOFORCE",
    "GLOBAL",
    "TEMPORARY",
    "UNIQUE",
    "PUBLIC",
    "MATERIALIZED",
    "BITMAP",
    "PRIVATE",
    "SHARED",
];

struct Walker<'t, 'a> {
    toks: &'t [Token<'a>],
    schema: &'t str,
}

impl<'t, 'a> Walker<'t, 'a> {
    fn get(&self, i: usize) -> Option<&'t Token<'a>> {
        self.toks.get(i)
    }

    fn leading_verb(&self) -> String {
        let mut start = 0;
        while self.get(start).is_some_and(|t| t.is_symbol("(")) {
            start += 1;
        }
        let Some(first) = self.get(start) else { return String::new() };
        if first.is_keyword("WITH") {
            let mut depth = 0i32;
            for t in &self.toks[start + 1..] {
                if t.is_symbol("(") {
                    depth += 1;
                } else if t.is_symbol(")") {
                    depth -= 1;
                } else if depth == 0
                    && ["SELECT", "INSERT", "UPDATE", "DELETE", "MERGE"].iter().any(|k| t.is_keyword(k))
                {
                    return t.value();
                }
            }
            return "SELECT".to_string();
        }
        match first.kind {
            TokenKind::Keyword | TokenKind::Identifier => first.value(),
            _ => String::new(),
        }
    }

    /// A top-level `;` followed by anything other than terminators.
    fn has_trailing_statement(&self) -> bool {
        let mut depth = 0i32;
        for (i, t) in self.toks.iter().enumerate() {
            if t.is_symbol("(") {
                depth += 1;
            } else if t.is_symbol(")") {
                depth -= 1;
            } else if depth <= 0 && t.is_symbol(";") {
                return self.toks[i + 1..].iter().any(|r| !(r.is_symbol(";") || r.is_symbol("/")));
            }
        }
        false
    }

    /// Parse a dotted name at `i`. Returns the parts and the index after it.
    fn dotted_name(&self, mut i: usize) -> Option<(Vec<String>, usize)> {
        let first = self.get(i)?;
        if !first.is_name() {
            return None;
        }
        let mut parts = vec![first.value()];
        i += 1;
        while self.get(i).is_some_and(|t| t.is_symbol("."))
            && self.get(i + 1).is_some_and(|t| t.is_name())
        {
            parts.push(self.toks[i + 1].value());
            i += 2;
        }
        // db link suffix
        if self.get(i).is_some_and(|t| t.is_symbol("@")) && self.get(i + 1).is_some_and(|t| t.is_name()) {
            i += 2;
        }
        Some((parts, i))
    }

    /// Owner and name of an object reference written as `name` or `owner.name`
    /// (anything beyond two parts, like a column suffix, is dropped).
    fn owner_and_name(&self, parts: &[String]) -> (String, String) {
        match parts {
            [name] => (self.schema.to_string(), name.clone()),
            [owner, name, ..] => (owner.clone(), name.clone()),
            [] => unreachable!("dotted_name never yields an empty path"),
        }
    }

    fn object_at(&self, i: usize, ty: ObjectType) -> Option<(ObjectRef, usize)> {
        let (parts, next) = self.dotted_name(i)?;
        let (owner, name) = self.owner_and_name(&parts);
        Some((ObjectRef::new(owner, ty, name), next))
    }

    /// Every `(owner, name)` appearing where a table or view source is
    /// expected: after FROM, JOIN, INTO, USING, UPDATE, and DELETE.
    fn source_names(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, t) in self.toks.iter().enumerate() {
            let list = t.is_keyword("FROM");
            let single = t.is_keyword("JOIN")
                || t.is_keyword("INTO")
                || t.is_keyword("USING")
                || (t.is_keyword("UPDATE") && !(i > 0 && self.toks[i - 1].is_keyword("FOR")))
                || t.is_keyword("DELETE")
                || (t.is_keyword("TABLE") && i > 0 && self.toks[i - 1].is_keyword("LOCK"));
            if !(list || single) {
                continue;
            }
            let mut j = i + 1;
            while let Some((parts, next)) = self.dotted_name(j) {
                out.push(self.owner_and_name(&parts));
                j = next;
                if !list {
                    break;
                }
                // optional alias
                if self.get(j).is_some_and(|t| t.is_keyword("AS")) {
                    j += 1;
                }
                if self.get(j).is_some_and(|t| t.is_name()) {
                    j += 1;
                }
                if self.get(j).is_some_and(|t| t.is_symbol(",")) {
                    j += 1;
                } else {
                    break;
                }
            }
        }
        out
    }

    fn skip_modifiers(&self, mut i: usize) -> usize {
        while self.get(i).is_some_and(|t| {
            matches!(t.kind, TokenKind::Keyword | TokenKind::Identifier)
                && CREATE_MODIFIERS.contains(&t.value().as_str())
        }) {
            i += 1;
        }
        i
    }

    /// Reads the object-type words at `i`; returns the type, whether it is
    /// a kind that names a schema object at all, and the index after it.
    fn object_type_at(&self, i: usize) -> (ObjectType, bool, usize) {
        let Some(t) = self.get(i) else { return (ObjectType::Unknown, false, i) };
        let word = match t.kind {
            TokenKind::Keyword | TokenKind::Identifier => t.value(),
            _ => return (ObjectType::Unknown, true, i),
        };
        let body = self.get(i + 1).is_some_and(|n| n.is_keyword("BODY"));
        match word.as_str() {
            "PROCEDURE" => (ObjectType::Procedure, true, i + 1),
            "FUNCTION" => (ObjectType::Function, true, i + 1),
            "PACKAGE" if body => (ObjectType::PackageBody, true, i + 2),
            "PACKAGE" => (ObjectType::Package, true, i + 1),
            "TRIGGER" => (ObjectType::Trigger, true, i + 1),
            "TABLE" => (ObjectType::Table, true, i + 1),
            "VIEW" => (ObjectType::View, true, i + 1),
            "TYPE" if body => (ObjectType::Unknown, true, i + 2),
            "SESSION" | "SYSTEM" | "DATABASE" | "TABLESPACE" | "PROFILE" | "ROLE" | "USER" => {
                (ObjectType::Unknown, false, i + 1)
            }
            _ if t.kind == TokenKind::Keyword || is_generic_type_word(&word) => {
                (ObjectType::Unknown, true, i + 1)
            }
            // not a type word at all: the name follows the verb directly
            _ => (ObjectType::Unknown, true, i),
        }
    }

    fn ddl_targets(&self, verb: &str) -> (Vec<ObjectRef>, bool) {
        let mut targets = Vec::new();
        let mut or_replace = false;
        match verb {
            "CREATE" | "ALTER" | "DROP" | "TRUNCATE" => {
                let mut i = 1;
                if verb == "CREATE"
                    && self.get(1).is_some_and(|t| t.is_keyword("OR"))
                    && self.get(2).is_some_and(|t| t.is_keyword("REPLACE"))
                {
                    or_replace = true;
                    i = 3;
                }
                i = self.skip_modifiers(i);
                let is_index = self.get(i).is_some_and(|t| t.is_keyword("INDEX"));
                let (ty, names_object, mut i) = self.object_type_at(i);
                if !names_object {
                    return (targets, or_replace);
                }
                if self.get(i).is_some_and(|t| t.is_keyword("IF")) {
                    i += 1;
                    while self.get(i).is_some_and(|t| t.is_keyword("NOT") || t.is_keyword("EXISTS")) {
                        i += 1;
                    }
                }
                if let Some((obj, _)) = self.object_at(i, ty) {
                    targets.push(obj);
                }
                // indexes and triggers act on another object named after ON
                if (is_index || ty == ObjectType::Trigger) && verb == "CREATE" {
                    if let Some(obj) = self.after_top_level("ON", ObjectType::Unknown) {
                        targets.push(obj);
                    }
                }
            }
            "RENAME" => {
                if let Some((from, next)) = self.object_at(1, ObjectType::Unknown) {
                    targets.push(from);
                    if self.get(next).is_some_and(|t| t.is_keyword("TO")) {
                        if let Some((to, _)) = self.object_at(next + 1, ObjectType::Unknown) {
                            targets.push(to);
                        }
                    }
                }
            }
            "GRANT" | "REVOKE" => {
                if let Some(obj) = self.after_top_level("ON", ObjectType::Unknown) {
                    targets.push(obj);
                }
            }
            // COMMENT ON TABLE t | COMMENT ON COLUMN t.c
            "COMMENT" if self.get(1).is_some_and(|t| t.is_keyword("ON")) => {
                let is_column = self.get(2).is_some_and(|t| t.value() == "COLUMN");
                let (ty, _, i) =
                    if is_column { (ObjectType::Table, true, 3) } else { self.object_type_at(2) };
                if let Some((parts, _)) = self.dotted_name(i) {
                    let path = if is_column && parts.len() > 1 {
                        &parts[..parts.len() - 1]
                    } else {
                        &parts[..]
                    };
                    let (owner, name) = self.owner_and_name(path);
                    targets.push(ObjectRef::new(owner, ty, name));
                }
            }
            _ => {}
        }
        (targets, or_replace)
    }

    /// Object named right after the first top-level occurrence of `kw`,
    /// skipping an optional object-type word (`ON TABLE x`, `ON hr.x`).
    fn after_top_level(&self, kw: &str, ty: ObjectType) -> Option<ObjectRef> {
        let mut depth = 0i32;
        for (i, t) in self.toks.iter().enumerate() {
            if t.is_symbol("(") {
                depth += 1;
            } else if t.is_symbol(")") {
                depth -= 1;
            } else if depth == 0 && t.is_keyword(kw) {
                let (found_ty, _, j) = self.object_type_at(i + 1);
                let ty = if found_ty == ObjectType::Unknown { ty } else { found_ty };
                return self.object_at(j, ty).map(|(o, _)| o);
            }
        }
        None
    }

    /// `CALL a.b.c(...)` could name schema.package.proc or package.proc;
    /// both readings are kept.
    fn call_targets(&self) -> Vec<ObjectRef> {
        let Some((parts, _)) = self.dotted_name(1) else { return Vec::new() };
        let unknown = |o: &str, n: &str| ObjectRef::new(o, ObjectType::Unknown, n);
        match parts.as_slice() {
            [one] => vec![unknown(self.schema, one)],
            [a, b] => vec![unknown(self.schema, a), unknown(a, b)],
            [a, b, ..] => vec![unknown(a, b)],
            [] => Vec::new(),
        }
    }
}

fn is_generic_type_word(word: &str) -> bool {
    matches!(
        word,
        "CLUSTER" | "DIRECTORY" | "LIBRARY" | "JAVA" | "CONTEXT" | "DIMENSION" | "OPERATOR"
            | "INDEXTYPE" | "EDITION" | "LOG" | "SNAPSHOT" | "MATERIALIZED"
    )
}
