//! Line-oriented wire protocols and their clients.
//!
//! Data port:
//!
//! ```text
//! C: AUTH <username>\n
//! S: OK session=<id>\n
//! C: STMT <nbytes>\n<statement bytes>
//! S: OK\n | ROWS <n>\n<n lines> | ERR <code> <message>\n | KILL <reason>\n (then close)
//! ```
//!
//! Admin port: `AUTH <password>` followed by one command per line, each
//! answered by `OK ...` or `ERR <code> <message>`. Arguments are separated by
//! single spaces and escaped with [`escape_arg`].

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::policy::Reason;

/// Largest statement accepted in one `STMT` frame.
pub const MAX_FRAME: usize = 1 << 20;
/// Longest command line accepted on either port.
pub const MAX_LINE: usize = 64 * 1024;
/// Failed admin logins tolerated per connection.
pub const MAX_AUTH_FAILURES: u32 = 3;

/// Escapes a row cell so it fits on one tab-separated line.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('s') => out.push(' '),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Escapes one admin command argument: as [`escape_field`], plus spaces.
pub fn escape_arg(s: &str) -> String {
    escape_field(s).replace(' ', "\\s")
}

/// Splits an admin command line into unescaped words.
pub fn split_args(line: &str) -> Vec<String> {
    line.split(' ').filter(|w| !w.is_empty()).map(unescape_field).collect()
}

/// Reads one `\n`-terminated line of at most `max` bytes. `Ok(None)` at EOF.
pub fn read_line_limited<R: BufRead>(r: &mut R, max: usize) -> io::Result<Option<String>> {
    let mut buf = Vec::new();
    let n = r.by_ref().take(max as u64 + 1).read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
    } else if buf.len() > max {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "line too long"));
    } else {
        return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed mid-line"));
    }
    if buf.last() == Some(&b'\r') {
        buf.pop();
    }
    String::from_utf8(buf).map(Some).map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "line is not UTF-8"))
}

/// One server reply on the data port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok,
    Rows(Vec<Vec<String>>),
    Err { code: String, message: String },
    Kill(Reason),
}

impl Reply {
    pub fn err(code: impl Into<String>, message: impl Into<String>) -> Reply {
        Reply::Err { code: code.into(), message: message.into() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = String::new();
        match self {
            Reply::Ok => out.push_str("OK\n"),
            Reply::Rows(rows) => {
                out.push_str(&format!("ROWS {}\n", rows.len()));
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|c| escape_field(c)).collect();
                    out.push_str(&cells.join("\t"));
                    out.push('\n');
                }
            }
            Reply::Err { code, message } => {
                out.push_str(&format!("ERR {code} {}\n", one_line(message)));
            }
            Reply::Kill(reason) => out.push_str(&format!("KILL {reason}\n")),
        }
        out.into_bytes()
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> io::Result<Reply> {
        let line = read_line_limited(r, MAX_LINE)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection"))?;
        Reply::parse_head(&line, r)
    }

    fn parse_head<R: BufRead>(line: &str, r: &mut R) -> io::Result<Reply> {
        let bad = || io::Error::new(io::ErrorKind::InvalidData, format!("unexpected reply {line:?}"));
        if line == "OK" {
            return Ok(Reply::Ok);
        }
        if let Some(n) = line.strip_prefix("ROWS ") {
            let n: usize = n.parse().map_err(|_| bad())?;
            let mut rows = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                let row = read_line_limited(r, MAX_FRAME)?.ok_or_else(bad)?;
                rows.push(row.split('\t').map(unescape_field).collect());
            }
            return Ok(Reply::Rows(rows));
        }
        if let Some(rest) = line.strip_prefix("ERR ") {
            let (code, message) = rest.split_once(' ').unwrap_or((rest, ""));
            return Ok(Reply::err(code, message));
        }
        if let Some(reason) = line.strip_prefix("KILL ") {
            return Reason::from_str(reason).map(Reply::Kill).map_err(|_| bad());
        }
        Err(bad())
    }

    /// Transcript form: one or more lines without the `< ` prefix.
    pub fn transcript_lines(&self) -> Vec<String> {
        String::from_utf8(self.encode()).unwrap().lines().map(str::to_string).collect()
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection failed: {0}")]
    Io(#[from] io::Error),
    #[error("server refused: {code} {message}")]
    Refused { code: String, message: String },
    #[error("unexpected server reply: {0}")]
    Protocol(String),
}

/// A data-port session.
pub struct DataClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    session_id: u64,
}

impl DataClient {
    pub fn connect(addr: impl ToSocketAddrs, user: &str) -> Result<DataClient, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        writer.write_all(format!("AUTH {user}\n").as_bytes())?;
        let line = read_line_limited(&mut reader, MAX_LINE)?
            .ok_or_else(|| ClientError::Protocol("connection closed during AUTH".into()))?;
        if let Some(id) = line.strip_prefix("OK session=") {
            let session_id = id.parse().map_err(|_| ClientError::Protocol(line.clone()))?;
            return Ok(DataClient { reader, writer, session_id });
        }
        match line.strip_prefix("ERR ") {
            Some(rest) => {
                let (code, message) = rest.split_once(' ').unwrap_or((rest, ""));
                Err(ClientError::Refused { code: code.into(), message: message.into() })
            }
            None => Err(ClientError::Protocol(line)),
        }
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn execute(&mut self, statement: &str) -> io::Result<Reply> {
        self.send(statement)?;
        Reply::read_from(&mut self.reader)
    }

    /// Writes one framed statement without waiting for the reply.
    pub fn send(&mut self, statement: &str) -> io::Result<()> {
        let mut frame = format!("STMT {}\n", statement.len()).into_bytes();
        frame.extend_from_slice(statement.as_bytes());
        self.writer.write_all(&frame)
    }

    pub fn read_reply(&mut self) -> io::Result<Reply> {
        Reply::read_from(&mut self.reader)
    }

    /// Writes raw bytes, for protocol tests.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.writer.write_all(bytes)
    }

    /// True once the server has closed its side.
    pub fn is_closed(&mut self) -> bool {
        matches!(self.reader.fill_buf(), Ok([]) | Err(_))
    }
}

/// One admin reply: the status line and, for exports, the payload that
/// follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdminResponse {
    pub line: String,
    pub body: Vec<String>,
    pub payload: Option<Vec<u8>>,
}

impl AdminResponse {
    pub fn is_ok(&self) -> bool {
        self.line == "OK" || self.line.starts_with("OK ")
    }

    /// `(code, message)` of an `ERR` reply.
    pub fn error(&self) -> Option<(&str, &str)> {
        let rest = self.line.strip_prefix("ERR ")?;
        Some(rest.split_once(' ').unwrap_or((rest, "")))
    }
}

/// An authenticated admin-port connection.
pub struct AdminClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl AdminClient {
    /// Connects without authenticating.
    pub fn connect_raw(addr: impl ToSocketAddrs) -> io::Result<AdminClient> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(AdminClient { reader: BufReader::new(stream), writer })
    }

    pub fn connect(addr: impl ToSocketAddrs, password: &str) -> Result<AdminClient, ClientError> {
        let mut client = AdminClient::connect_raw(addr)?;
        let resp = client.command(&["AUTH", password])?;
        match resp.error() {
            None if resp.is_ok() => Ok(client),
            Some((code, message)) => Err(ClientError::Refused { code: code.into(), message: message.into() }),
            None => Err(ClientError::Protocol(resp.line)),
        }
    }

    /// Sends one command (words escaped here) and reads its reply.
    pub fn command(&mut self, words: &[&str]) -> io::Result<AdminResponse> {
        let mut line = words.iter().map(|w| escape_arg(w)).collect::<Vec<_>>().join(" ");
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.read_response()
    }

    pub fn read_response(&mut self) -> io::Result<AdminResponse> {
        let line = read_line_limited(&mut self.reader, MAX_LINE)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection"))?;
        let mut resp = AdminResponse { line, body: Vec::new(), payload: None };
        let words: Vec<&str> = resp.line.split(' ').collect();
        match words.as_slice() {
            ["OK", "export", n] => {
                let n: usize = n.parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad export size"))?;
                let mut buf = vec![0u8; n];
                self.reader.read_exact(&mut buf)?;
                resp.payload = Some(buf);
            }
            ["OK", "rows", n] => {
                let n: usize = n.parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad row count"))?;
                for _ in 0..n {
                    let row = read_line_limited(&mut self.reader, MAX_LINE)?
                        .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "truncated listing"))?;
                    resp.body.push(row);
                }
            }
            _ => {}
        }
        Ok(resp)
    }

    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.writer.write_all(bytes)
    }

    pub fn is_closed(&mut self) -> bool {
        matches!(self.reader.fill_buf(), Ok([]) | Err(_))
    }
}

/// Asks the local console channel for a password reset. Returns the reply
/// line.
#[cfg(unix)]
pub fn console_reset_password(socket: &Path) -> io::Result<String> {
    use std::os::unix::net::UnixStream;
    let stream = UnixStream::connect(socket)?;
    let mut writer = stream.try_clone()?;
    writer.write_all(b"RESET_PASSWORD\n")?;
    let mut reader = BufReader::new(stream);
    read_line_limited(&mut reader, MAX_LINE)?
        .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "console closed the connection"))
}
