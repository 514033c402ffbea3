//! A toy wrap/unwrap format for stored PL/SQL units.
//!
//! A wrapped unit is four header lines followed by the base64 of the unit's
//! full source text:
//!
//! ```text
//! PACKAGE EMP_ACTIONS WRAPPED
//! a000000
//! 1f3            <- source length in bytes, lowercase hex
//! abcd
//! Q1JFQVRFIFBBQ0tBR0UgZW1wX2FjdGlvbnMgQVMK...
//! ```
//!
//! The encoding hides nothing from anyone who knows it is base64; that is the
//! point of shipping an unwrapper next to it.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

use crate::lexer::{tokenize, LexError, Token, TokenKind};
use crate::script::split_script;

const VERSION_LINE: &str = "a000000";
const MARKER_LINE: &str = "abcd";
const PAYLOAD_WIDTH: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitType {
    Procedure,
    Function,
    Package,
    PackageBody,
    TypeSpec,
    TypeBody,
}

impl UnitType {
    pub fn keyword(self) -> &'static str {
        match self {
            UnitType::Procedure => "PROCEDURE",
            UnitType::Function => "FUNCTION",
            UnitType::Package => "PACKAGE",
            UnitType::PackageBody => "PACKAGE BODY",
            UnitType::TypeSpec => "TYPE",
            UnitType::TypeBody => "TYPE BODY",
        }
    }

    fn from_keyword(kw: &str) -> Option<UnitType> {
        let norm: Vec<String> = kw.split_whitespace().map(str::to_ascii_uppercase).collect();
        match norm.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["PROCEDURE"] => Some(UnitType::Procedure),
            ["FUNCTION"] => Some(UnitType::Function),
            ["PACKAGE"] => Some(UnitType::Package),
            ["PACKAGE", "BODY"] => Some(UnitType::PackageBody),
            ["TYPE"] => Some(UnitType::TypeSpec),
            ["TYPE", "BODY"] => Some(UnitType::TypeBody),
            _ => None,
        }
    }
}

impl fmt::Display for UnitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WrapError {
    #[error("trigger {0} cannot be wrapped; wrap a subprogram and call it from a one-line trigger")]
    TriggerNotWrappable(String),
    #[error("anonymous blocks cannot be wrapped")]
    AnonymousBlockNotWrappable,
    #[error("not a wrappable PL/SQL unit")]
    UnrecognizedUnit,
    #[error("unit {0} is already wrapped")]
    AlreadyWrapped(String),
    #[error("tokenization error: {0}")]
    Tokenization(#[from] LexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnwrapError {
    #[error("malformed wrapped header: {0}")]
    MalformedHeader(String),
    #[error("header declares {declared} bytes but payload holds {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload is not valid base64 text: {0}")]
    BadPayload(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedUnit {
    pub unit_type: UnitType,
    /// Display name as written in the header (uppercased unless quoted).
    pub unit_name: String,
    pub source_len: usize,
    pub payload: String,
}

impl WrappedUnit {
    pub fn header(&self) -> [String; 4] {
        [
            format!("{} {} WRAPPED", self.unit_type.keyword(), self.unit_name),
            VERSION_LINE.to_string(),
            format!("{:x}", self.source_len),
            MARKER_LINE.to_string(),
        ]
    }

    /// Header and payload lines, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut out = self.header().join("\n");
        out.push('\n');
        let bytes = self.payload.as_bytes();
        for chunk in bytes.chunks(PAYLOAD_WIDTH) {
            out.push_str(std::str::from_utf8(chunk).expect("base64 is ASCII"));
            out.push('\n');
        }
        out
    }

    /// Parses wrapped text, tolerating a leading `CREATE [OR REPLACE]`.
    pub fn parse(text: &str) -> Result<WrappedUnit, UnwrapError> {
        let malformed = |why: &str| UnwrapError::MalformedHeader(why.to_string());
        let mut lines = text.lines();
        let first = strip_create(lines.next().ok_or_else(|| malformed("empty input"))?.trim());
        let head = first
            .strip_suffix("WRAPPED")
            .or_else(|| first.strip_suffix("wrapped"))
            .ok_or_else(|| malformed("first line must end with WRAPPED"))?
            .trim_end();
        let (kw, name) = split_unit_head(head).ok_or_else(|| malformed("unknown unit type"))?;
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(malformed("bad unit name"));
        }
        if lines.next().map(str::trim) != Some(VERSION_LINE) {
            return Err(malformed("second line must be a000000"));
        }
        let len_line = lines.next().ok_or_else(|| malformed("missing length line"))?.trim();
        if len_line.is_empty() || len_line.chars().any(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(malformed("length line must be lowercase hex"));
        }
        let source_len = usize::from_str_radix(len_line, 16).map_err(|_| malformed("length out of range"))?;
        if lines.next().map(str::trim) != Some(MARKER_LINE) {
            return Err(malformed("fourth line must be abcd"));
        }
        let payload: String = lines.map(str::trim).filter(|l| !l.is_empty() && *l != "/").collect();
        Ok(WrappedUnit { unit_type: kw, unit_name: name.to_string(), source_len, payload })
    }

    /// Decodes the payload back to the original source.
    pub fn decode(&self) -> Result<String, UnwrapError> {
        let bytes = STANDARD.decode(self.payload.as_bytes()).map_err(|e| UnwrapError::BadPayload(e.to_string()))?;
        if bytes.len() != self.source_len {
            return Err(UnwrapError::LengthMismatch { declared: self.source_len, actual: bytes.len() });
        }
        String::from_utf8(bytes).map_err(|e| UnwrapError::BadPayload(e.to_string()))
    }
}

/// Whether `text` starts with a well-formed wrapped header.
pub fn is_wrapped_text(text: &str) -> bool {
    let head: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
    WrappedUnit::parse(&head).is_ok()
}

fn strip_create(line: &str) -> &str {
    let mut rest = line;
    let mut take = |word: &str| -> bool {
        let trimmed = rest.trim_start();
        if trimmed.len() >= word.len()
            && trimmed[..word.len()].eq_ignore_ascii_case(word)
            && trimmed[word.len()..].starts_with(char::is_whitespace)
        {
            rest = &trimmed[word.len()..];
            true
        } else {
            false
        }
    };
    if take("CREATE") {
        let _ = take("OR") && take("REPLACE");
    }
    rest.trim_start()
}

fn split_unit_head(head: &str) -> Option<(UnitType, &str)> {
    let words: Vec<&str> = head.split_whitespace().collect();
    match words.as_slice() {
        [kw, body, name] if body.eq_ignore_ascii_case("BODY") => {
            Some((UnitType::from_keyword(&format!("{kw} BODY"))?, name))
        }
        [kw, name] => Some((UnitType::from_keyword(kw)?, name)),
        _ => None,
    }
}

/// Renders a name part as it would be written in SQL.
fn render_part(tok: &Token<'_>) -> String {
    let v = tok.value();
    if tok.kind == TokenKind::QuotedIdentifier {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v
    }
}

/// What a unit's leading tokens say about it.
struct UnitHead {
    unit_type: UnitType,
    name: String,
    already_wrapped: bool,
    has_create: bool,
}

fn read_head(source: &str) -> Result<UnitHead, WrapError> {
    let tokens = tokenize(source)?;
    let toks: Vec<Token<'_>> = tokens.into_iter().filter(|t| !t.is_trivia()).collect();
    let mut i = 0;
    let has_create = toks.first().is_some_and(|t| t.is_keyword("CREATE"));
    if has_create {
        i += 1;
        if toks.get(i).is_some_and(|t| t.is_keyword("OR")) && toks.get(i + 1).is_some_and(|t| t.is_keyword("REPLACE")) {
            i += 2;
        }
        while toks.get(i).is_some_and(|t| t.is_keyword("EDITIONABLE") || t.is_keyword("NONEDITIONABLE")) {
            i += 1;
        }
    }
    let Some(kw) = toks.get(i) else { return Err(WrapError::UnrecognizedUnit) };
    let body = toks.get(i + 1).is_some_and(|t| t.is_keyword("BODY"));
    let (unit_type, skip) = if kw.is_keyword("DECLARE") || kw.is_keyword("BEGIN") {
        return Err(WrapError::AnonymousBlockNotWrappable);
    } else if kw.is_keyword("TRIGGER") {
        let name = toks.get(i + 1).filter(|t| t.is_name()).map(|t| render_part(t)).unwrap_or_default();
        return Err(WrapError::TriggerNotWrappable(name));
    } else if kw.is_keyword("PROCEDURE") {
        (UnitType::Procedure, 1)
    } else if kw.is_keyword("FUNCTION") {
        (UnitType::Function, 1)
    } else if kw.is_keyword("PACKAGE") {
        if body { (UnitType::PackageBody, 2) } else { (UnitType::Package, 1) }
    } else if kw.is_keyword("TYPE") {
        if body { (UnitType::TypeBody, 2) } else { (UnitType::TypeSpec, 1) }
    } else {
        return Err(WrapError::UnrecognizedUnit);
    };
    i += skip;

    let mut parts = Vec::new();
    loop {
        match toks.get(i) {
            Some(t) if t.is_name() => parts.push(render_part(t)),
            _ => break,
        }
        i += 1;
        if toks.get(i).is_some_and(|t| t.is_symbol(".")) {
            i += 1;
        } else {
            break;
        }
    }
    if parts.is_empty() {
        return Err(WrapError::UnrecognizedUnit);
    }
    let already_wrapped = toks
        .get(i)
        .is_some_and(|t| t.kind == TokenKind::Identifier && t.value() == "WRAPPED");
    Ok(UnitHead { unit_type, name: parts.join("."), already_wrapped, has_create })
}

/// Wraps one PL/SQL unit. Deterministic: the same source always yields the
/// same wrapped form.
pub fn wrap_unit(source: &str) -> Result<WrappedUnit, WrapError> {
    let head = read_head(source)?;
    if head.already_wrapped {
        return Err(WrapError::AlreadyWrapped(head.name));
    }
    Ok(WrappedUnit {
        unit_type: head.unit_type,
        unit_name: head.name,
        source_len: source.len(),
        payload: STANDARD.encode(source.as_bytes()),
    })
}

/// Recovers the original source from wrapped text.
pub fn unwrap_unit(wrapped: &str) -> Result<String, UnwrapError> {
    WrappedUnit::parse(wrapped)?.decode()
}

/// Reports whether `source` begins with `CREATE` (required for installing).
pub fn is_create_statement(source: &str) -> Result<bool, WrapError> {
    Ok(read_head(source)?.has_create)
}

#[derive(Debug, Error)]
pub enum WrapFileError {
    #[error("input file {} not found", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}:{line}: {source}", path.display())]
    Unit { path: PathBuf, line: usize, source: WrapError },
    #[error("{}: {source}", path.display())]
    Tokenization { path: PathBuf, source: LexError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Input path with `.sql` assumed when no extension is given.
pub fn resolve_input(iname: &Path) -> PathBuf {
    if iname.extension().is_none() {
        iname.with_extension("sql")
    } else {
        iname.to_path_buf()
    }
}

/// Default output: the input's stem with a `.plb` extension.
pub fn default_output(input: &Path) -> PathBuf {
    input.with_extension("plb")
}

/// Wraps every PL/SQL unit in a script, copying everything else verbatim.
pub fn wrap_script(text: &str) -> Result<String, (usize, WrapError)> {
    let stmts = split_script(text).map_err(|e| {
        let offset = match &e {
            LexError::UnterminatedString(o) | LexError::UnterminatedIdentifier(o) | LexError::UnterminatedComment(o) => *o,
        };
        (text[..offset].matches('\n').count() + 1, WrapError::Tokenization(e))
    })?;
    let mut out = String::with_capacity(text.len() * 2);
    let mut pos = 0;
    for stmt in stmts {
        out.push_str(&text[pos..stmt.span.start]);
        pos = stmt.span.end;
        if !stmt.block {
            out.push_str(stmt.text);
            continue;
        }
        match wrap_unit(stmt.text) {
            Ok(unit) => {
                let head = read_head(stmt.text).map_err(|e| (stmt.line, e))?;
                if head.has_create {
                    let prefix_end = stmt.text.find(|c: char| c.is_whitespace()).unwrap_or(0);
                    let lead = &stmt.text[..prefix_end];
                    let or_replace = {
                        let toks = tokenize(stmt.text).unwrap_or_default();
                        let sig: Vec<_> = toks.iter().filter(|t| !t.is_trivia()).collect();
                        sig.get(1).is_some_and(|t| t.is_keyword("OR"))
                    };
                    out.push_str(lead);
                    out.push_str(if or_replace { " OR REPLACE " } else { " " });
                }
                let text = unit.to_text();
                out.push_str(text.strip_suffix('\n').unwrap_or(&text));
            }
            Err(WrapError::AlreadyWrapped(_)) | Err(WrapError::AnonymousBlockNotWrappable) => {
                out.push_str(stmt.text);
            }
            Err(e) => return Err((stmt.line, e)),
        }
    }
    out.push_str(&text[pos..]);
    Ok(out)
}

/// `wrap iname=<file> [oname=<file>]`.
pub fn wrap_file(iname: &Path, oname: Option<&Path>) -> Result<PathBuf, WrapFileError> {
    let input = resolve_input(iname);
    let text = match fs::read_to_string(&input) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(WrapFileError::FileNotFound(input)),
        Err(e) => return Err(e.into()),
    };
    let wrapped = wrap_script(&text).map_err(|(line, e)| match e {
        WrapError::Tokenization(source) => WrapFileError::Tokenization { path: input.clone(), source },
        source => WrapFileError::Unit { path: input.clone(), line, source },
    })?;
    let output = oname.map(Path::to_path_buf).unwrap_or_else(|| default_output(&input));
    fs::write(&output, wrapped)?;
    Ok(output)
}
