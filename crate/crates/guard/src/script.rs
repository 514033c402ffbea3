//! Splitting SQL*Plus-style scripts into single statements.
//!
//! Plain statements end at a top-level `;` that is followed by a newline (or
//! the end of input). PL/SQL units and anonymous blocks carry their own
//! semicolons, so they run until a line holding only `/`.

use std::ops::Range;

use crate::classifier::is_block_statement;
use crate::lexer::{tokenize, LexError, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStatement<'a> {
    /// Statement text. Includes the trailing `;` for plain statements and
    /// excludes the `/` line for blocks.
    pub text: &'a str,
    pub span: Range<usize>,
    /// Span of the terminator (`;` or the `/` line), if any.
    pub terminator: Option<Range<usize>>,
    /// 1-based line of the first token.
    pub line: usize,
    pub block: bool,
}

pub fn split_script(text: &str) -> Result<Vec<ScriptStatement<'_>>, LexError> {
    let tokens = tokenize(text)?;
    let sig: Vec<&Token<'_>> = tokens.iter().filter(|t| !t.is_trivia()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < sig.len() {
        // stray terminators between statements
        if sig[i].is_symbol(";") || (sig[i].is_symbol("/") && alone_on_line(text, &sig[i].span)) {
            i += 1;
            continue;
        }
        let start = sig[i].span.start;
        let head: Vec<Token<'_>> = sig[i..].iter().take(6).map(|t| (*t).clone()).collect();
        let block = is_block_statement(&head);

        let mut end_tok = None;
        let mut j = i;
        while j < sig.len() {
            let t = sig[j];
            if block {
                if t.is_symbol("/") && alone_on_line(text, &t.span) {
                    end_tok = Some(j);
                    break;
                }
            } else if t.is_symbol(";") && newline_follows(text, t.span.end) {
                end_tok = Some(j);
                break;
            }
            j += 1;
        }

        let (span, terminator, next) = match end_tok {
            Some(e) if block => {
                let body_end = sig[e - 1].span.end;
                (start..body_end, Some(sig[e].span.clone()), e + 1)
            }
            Some(e) => (start..sig[e].span.end, Some(sig[e].span.clone()), e + 1),
            None => (start..sig.last().map_or(start, |t| t.span.end), None, sig.len()),
        };
        let line = text[..start].matches('\n').count() + 1;
        out.push(ScriptStatement { text: &text[span.clone()], span, terminator, line, block });
        i = next;
    }
    Ok(out)
}

fn alone_on_line(text: &str, span: &Range<usize>) -> bool {
    let line_start = text[..span.start].rfind('\n').map_or(0, |p| p + 1);
    let line_end = text[span.end..].find('\n').map_or(text.len(), |p| span.end + p);
    text[line_start..span.start].trim().is_empty() && text[span.end..line_end].trim().is_empty()
}

/// Only blanks and comments may sit between a `;` and the end of its line.
fn newline_follows(text: &str, pos: usize) -> bool {
    let rest = &text[pos..];
    let line = rest.split('\n').next().unwrap_or("");
    let trimmed = line.trim();
    trimmed.is_empty() || trimmed.starts_with("--") || (trimmed.starts_with("/*") && trimmed.ends_with("*/"))
}
