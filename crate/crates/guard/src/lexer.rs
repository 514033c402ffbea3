//! SQL tokenizer.
//!
//! The lexer is deliberately shallow: it knows about literals, comments,
//! quoted identifiers and a fixed keyword list, which is all the statement
//! classifier needs. Every token carries its byte span so the original text
//! can be reconstructed from the token stream plus the whitespace between
//! tokens.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated quoted identifier starting at byte {0}")]
    UnterminatedIdentifier(usize),
    #[error("unterminated comment starting at byte {0}")]
    UnterminatedComment(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Identifier,
    QuotedIdentifier,
    StringLiteral,
    Number,
    Symbol,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    /// The exact source slice.
    pub lexeme: &'a str,
    pub span: Range<usize>,
}

impl<'a> Token<'a> {
    /// Normalized value: keywords and unquoted identifiers are uppercased,
    /// quoted identifiers lose their quotes (with `""` collapsed), everything
    /// else is returned verbatim.
    pub fn value(&self) -> String {
        match self.kind {
            TokenKind::Keyword | TokenKind::Identifier => self.lexeme.to_ascii_uppercase(),
            TokenKind::QuotedIdentifier => {
                let inner = &self.lexeme[1..self.lexeme.len() - 1];
                inner.replace("\"\"", "\"")
            }
            _ => self.lexeme.to_string(),
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.lexeme.eq_ignore_ascii_case(kw)
    }

    pub fn is_symbol(&self, sym: &str) -> bool {
        self.kind == TokenKind::Symbol && self.lexeme == sym
    }

    pub fn is_name(&self) -> bool {
        matches!(self.kind, TokenKind::Identifier | TokenKind::QuotedIdentifier)
    }

    pub fn is_trivia(&self) -> bool {
        self.kind == TokenKind::Comment
    }
}

/// Reserved words recognized by the classifier. Anything else that looks like
/// a word is an identifier.
const KEYWORDS: &[&str] = &[
    "ALL", "ALTER", "AND", "AS", "BEGIN", "BODY", "BY", "CALL", "COMMENT", "COMMIT", "CONNECT",
    "CREATE", "CROSS", "DECLARE", "DELETE", "DISTINCT", "DROP", "EDITIONABLE", "ELSE", "END",
    "EXEC", "EXECUTE", "EXISTS", "FOR", "FORCE", "FROM", "FULL", "FUNCTION", "GLOBAL", "GRANT",
    "GROUP", "HAVING", "IF", "IN", "INDEX", "INNER", "INSERT", "INTERSECT", "INTO", "IS", "JOIN",
    "LEFT", "LIKE", "LOCK", "MATERIALIZED", "MERGE", "MINUS", "NATURAL", "NOFORCE",
    "NONEDITIONABLE", "NOT", "NOWAIT", "NULL", "OF", "ON", "OR", "ORDER", "OUTER", "PACKAGE",
    "PROCEDURE", "PUBLIC", "RENAME", "REPLACE", "REVOKE", "RIGHT", "ROLLBACK", "SAVEPOINT",
    "SELECT", "SEQUENCE", "SET", "SYNONYM", "TABLE", "TEMPORARY", "THEN", "TO", "TRIGGER",
    "TRUNCATE", "TYPE", "UNION", "UNIQUE", "UPDATE", "USER", "USING", "VALUES", "VIEW", "WHEN",
    "WHERE", "WITH",
];

pub fn is_keyword(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    KEYWORDS.binary_search(&upper.as_str()).is_ok()
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '$' | '#')
}

/// Split `text` into tokens. Whitespace is skipped; comments are kept as
/// single opaque tokens.
pub fn tokenize(text: &str) -> Result<Vec<Token<'_>>, LexError> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut chars = text.char_indices().peekable();

    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }

        let kind;
        let end;
        if c == '-' && bytes.get(start + 1) == Some(&b'-') {
            // line comment runs to (not including) the newline
            end = text[start..].find('\n').map_or(text.len(), |i| start + i);
            kind = TokenKind::Comment;
        } else if c == '/' && bytes.get(start + 1) == Some(&b'*') {
            end = match text[start + 2..].find("*/") {
                Some(i) => start + 2 + i + 2,
                None => return Err(LexError::UnterminatedComment(start)),
            };
            kind = TokenKind::Comment;
        } else if c == '\'' {
            end = scan_quoted(text, start, b'\'').ok_or(LexError::UnterminatedString(start))?;
            kind = TokenKind::StringLiteral;
        } else if c == '"' {
            end =
                scan_quoted(text, start, b'"').ok_or(LexError::UnterminatedIdentifier(start))?;
            kind = TokenKind::QuotedIdentifier;
        } else if c.is_ascii_digit()
            || (c == '.' && bytes.get(start + 1).is_some_and(u8::is_ascii_digit))
        {
            let mut e = start + 1;
            while e < bytes.len() && (bytes[e].is_ascii_digit() || bytes[e] == b'.') {
                e += 1;
            }
            end = e;
            kind = TokenKind::Number;
        } else if is_ident_start(c) {
            let rest = &text[start..];
            let len = rest
                .char_indices()
                .find(|&(_, ch)| !is_ident_continue(ch))
                .map_or(rest.len(), |(i, _)| i);
            end = start + len;
            kind = if is_keyword(&text[start..end]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
        } else {
            let two = text.get(start..start + 2);
            end = match two {
                Some("||" | "<=" | ">=" | "<>" | "!=" | ":=" | "=>" | "..") => start + 2,
                _ => start + c.len_utf8(),
            };
            kind = TokenKind::Symbol;
        }

        tokens.push(Token { kind, lexeme: &text[start..end], span: start..end });
        while chars.peek().is_some_and(|&(i, _)| i < end) {
            chars.next();
        }
    }
    Ok(tokens)
}

/// Returns the end offset (exclusive) of a quoted run starting at `start`.
/// A doubled quote character is an escape.
fn scan_quoted(text: &str, start: usize, quote: u8) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut i = start + 1;
    while i < bytes.len() {
        if bytes[i] == quote {
            if bytes.get(i + 1) == Some(&quote) {
                i += 2;
                continue;
            }
            return Some(i + 1);
        }
        i += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds(text: &str) -> Vec<(TokenKind, String)> {
        tokenize(text).unwrap().into_iter().map(|t| (t.kind, t.value())).collect()
    }

    #[test]
    fn keyword_table_is_sorted() {
        let mut sorted = KEYWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, KEYWORDS);
    }

    #[test]
    fn drop_procedure() {
        use TokenKind::*;
        assert_eq!(
            kinds("DROP PROCEDURE p;"),
            vec![
                (Keyword, "DROP".into()),
                (Keyword, "PROCEDURE".into()),
                (Identifier, "P".into()),
                (Symbol, ";".into()),
            ]
        );
    }

    #[test]
    fn user_source_query() {
        let toks = tokenize("SELECT text FROM USER_SOURCE WHERE name = 'EMP_ACTIONS';").unwrap();
        assert!(toks
            .iter()
            .any(|t| t.kind == TokenKind::Identifier && t.value() == "USER_SOURCE"));
        assert!(toks
            .iter()
            .any(|t| t.kind == TokenKind::StringLiteral && t.lexeme == "'EMP_ACTIONS'"));
    }

    #[test]
    fn comment_is_opaque() {
        let toks = tokenize("/* DROP TABLE t */ SELECT 1;").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Comment);
        assert!(!toks.iter().any(|t| t.is_keyword("DROP")));
    }

    #[test]
    fn line_comment_stops_at_newline() {
        let toks = tokenize("-- drop table x\nSELECT 1").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Comment);
        assert_eq!(toks[0].lexeme, "-- drop table x");
        assert!(toks[1].is_keyword("SELECT"));
    }

    #[test]
    fn escaped_quotes() {
        let toks = tokenize("SELECT 'it''s' , \"a\"\"b\" FROM dual").unwrap();
        assert_eq!(toks[1].lexeme, "'it''s'");
        assert_eq!(toks[3].value(), "a\"b");
    }

    #[test]
    fn unterminated_inputs() {
        assert_eq!(tokenize("SELECT 'abc"), Err(LexError::UnterminatedString(7)));
        assert_eq!(tokenize("SELECT /* x"), Err(LexError::UnterminatedComment(7)));
        assert_eq!(tokenize("DROP TABLE \"x"), Err(LexError::UnterminatedIdentifier(11)));
    }

    #[test]
    fn quoted_identifier_keeps_case() {
        let toks = tokenize("\"MixedCase\"").unwrap();
        assert_eq!(toks[0].kind, TokenKind::QuotedIdentifier);
        assert_eq!(toks[0].value(), "MixedCase");
    }

    #[test]
    fn oracle_identifier_chars() {
        let toks = tokenize("SYS.IDL_UB1$ a#b").unwrap();
        assert_eq!(toks[2].value(), "IDL_UB1$");
        assert_eq!(toks[3].value(), "A#B");
    }

    proptest! {
        #[test]
        fn lexemes_plus_whitespace_reconstruct_input(s in "[ -~\n\t]{0,80}") {
            if let Ok(tokens) = tokenize(&s) {
                let mut rebuilt = String::new();
                let mut pos = 0;
                for t in &tokens {
                    let gap = &s[pos..t.span.start];
                    prop_assert!(gap.chars().all(char::is_whitespace));
                    rebuilt.push_str(gap);
                    rebuilt.push_str(t.lexeme);
                    pos = t.span.end;
                }
                let tail = &s[pos..];
                prop_assert!(tail.chars().all(char::is_whitespace));
                rebuilt.push_str(tail);
                prop_assert_eq!(rebuilt, s);
            }
        }

        #[test]
        fn literal_contents_never_emit_keywords(body in "[A-Za-z ;]{0,40}") {
            let text = format!("SELECT '{}' FROM t", body.replace('\'', ""));
            let toks = tokenize(&text).unwrap();
            let kws: Vec<_> = toks.iter().filter(|t| t.kind == TokenKind::Keyword).map(|t| t.value()).collect();
            prop_assert_eq!(kws, vec!["SELECT".to_string(), "FROM".to_string()]);
        }
    }
}
