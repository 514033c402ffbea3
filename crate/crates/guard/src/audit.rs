//! Append-only audit tables: `killed_sessions.csv` and `ddl_log.csv`.
//!
//! Each append is written as one complete CSV row and synced before the call
//! returns. Files use the same quoting as the export, so an export of the
//! whole table is byte-identical to the file contents.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use thiserror::Error;
use tracing::warn;

use crate::classifier::{ParsedStatement, StatementClass};
use crate::policy::{Reason, Verdict};

pub const KILLED_FILE: &str = "killed_sessions.csv";
pub const DDL_FILE: &str = "ddl_log.csv";
pub const KILLED_HEADER: [&str; 5] = ["session_id", "user", "statement", "reason", "killed_at"];
pub const DDL_HEADER: [&str; 5] = ["session_id", "user", "statement", "verdict", "logged_at"];

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit storage failure: {0}")]
    Storage(#[from] io::Error),
    #[error("session {0} already has a killed-session record")]
    DuplicateSession(u64),
    #[error("reason {0} does not kill a session")]
    NotAKillReason(Reason),
    #[error("only DDL statements belong in the DDL log (got {0})")]
    NotDdl(&'static str),
    #[error("invalid date range: {0} is after {1}")]
    InvalidRange(NaiveDate, NaiveDate),
    #[error("corrupt audit file {}: {detail}", path.display())]
    Corrupt { path: PathBuf, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KilledSessionRecord {
    pub session_id: u64,
    pub user: String,
    pub statement: String,
    pub reason: Reason,
    pub killed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdlLogRecord {
    pub session_id: u64,
    pub user: String,
    pub statement: String,
    pub verdict: Verdict,
    pub logged_at: DateTime<Utc>,
}

impl DdlLogRecord {
    pub fn new(
        session_id: u64,
        user: &str,
        stmt: &ParsedStatement,
        verdict: Verdict,
        logged_at: DateTime<Utc>,
    ) -> Result<Self, AuditError> {
        if stmt.class != StatementClass::Ddl {
            return Err(AuditError::NotDdl(stmt.class.as_str()));
        }
        Ok(DdlLogRecord {
            session_id,
            user: user.to_string(),
            statement: stmt.raw.clone(),
            verdict,
            logged_at,
        })
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
}

fn csv_row(fields: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields).expect("writing to a Vec cannot fail");
    w.into_inner().expect("flushing a Vec cannot fail")
}

impl KilledSessionRecord {
    fn to_row(&self) -> Vec<u8> {
        csv_row(&[
            &self.session_id.to_string(),
            &self.user,
            &self.statement,
            self.reason.as_str(),
            &format_timestamp(&self.killed_at),
        ])
    }

    pub fn from_fields(f: &csv::StringRecord) -> Option<Self> {
        Some(KilledSessionRecord {
            session_id: f.get(0)?.parse().ok()?,
            user: f.get(1)?.to_string(),
            statement: f.get(2)?.to_string(),
            reason: f.get(3)?.parse().ok()?,
            killed_at: parse_timestamp(f.get(4)?)?,
        })
    }
}

impl DdlLogRecord {
    fn to_row(&self) -> Vec<u8> {
        csv_row(&[
            &self.session_id.to_string(),
            &self.user,
            &self.statement,
            self.verdict.as_str(),
            &format_timestamp(&self.logged_at),
        ])
    }

    pub fn from_fields(f: &csv::StringRecord) -> Option<Self> {
        Some(DdlLogRecord {
            session_id: f.get(0)?.parse().ok()?,
            user: f.get(1)?.to_string(),
            statement: f.get(2)?.to_string(),
            verdict: f.get(3)?.parse().ok()?,
            logged_at: parse_timestamp(f.get(4)?)?,
        })
    }
}

/// Parse a CSV document with the given header into records.
pub fn parse_csv<T>(
    data: &[u8],
    header: &[&str; 5],
    parse: impl Fn(&csv::StringRecord) -> Option<T>,
) -> Result<Vec<T>, String> {
    let (records, partial) = parse_prefix(data, header, &parse)?;
    if partial.is_some() {
        return Err("truncated final record".to_string());
    }
    Ok(records)
}

/// Parses as many complete records as possible. Returns the records and,
/// when the final record is incomplete, the byte offset where it starts.
fn parse_prefix<T>(
    data: &[u8],
    header: &[&str; 5],
    parse: &impl Fn(&csv::StringRecord) -> Option<T>,
) -> Result<(Vec<T>, Option<u64>), String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(data);
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let mut first = true;
    loop {
        let start = rdr.position().byte();
        let res = rdr.read_record(&mut rec);
        let end = rdr.position().byte();
        let complete_line = end as usize <= data.len() && end > 0 && data[end as usize - 1] == b'\n';
        match res {
            Ok(false) => break,
            Ok(true) if first => {
                first = false;
                if rec.iter().ne(header.iter().copied()) {
                    return Err(format!("unexpected header {:?}", rec.iter().collect::<Vec<_>>()));
                }
            }
            Ok(true) => match parse(&rec) {
                Some(r) if complete_line => out.push(r),
                _ if end as usize >= data.len() => return Ok((out, Some(start))),
                _ => return Err(format!("bad record at byte {start}")),
            },
            Err(_) if end as usize >= data.len() => return Ok((out, Some(start))),
            Err(e) => return Err(e.to_string()),
        }
    }
    if first {
        return Err("missing header".to_string());
    }
    Ok((out, None))
}

struct KilledTable {
    file: File,
    records: Vec<KilledSessionRecord>,
    ids: HashSet<u64>,
}

struct DdlTable {
    file: File,
    count: u64,
    max_session: u64,
}

/// The two audit tables of one state directory.
pub struct AuditStore {
    dir: PathBuf,
    killed: Mutex<KilledTable>,
    ddl: Mutex<DdlTable>,
}

impl AuditStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, AuditError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let (kfile, killed) =
            open_table(&dir.join(KILLED_FILE), &KILLED_HEADER, &KilledSessionRecord::from_fields)?;
        let (dfile, ddl) = open_table(&dir.join(DDL_FILE), &DDL_HEADER, &DdlLogRecord::from_fields)?;
        let ids = killed.iter().map(|r| r.session_id).collect();
        let max_session = ddl.iter().map(|r| r.session_id).max().unwrap_or(0);
        Ok(AuditStore {
            dir,
            killed: Mutex::new(KilledTable { file: kfile, records: killed, ids }),
            ddl: Mutex::new(DdlTable { file: dfile, count: ddl.len() as u64, max_session }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Highest session id seen in either table; new sessions start above it.
    pub fn max_session_id(&self) -> u64 {
        let k = self.killed.lock().unwrap().ids.iter().copied().max().unwrap_or(0);
        let d = self.ddl.lock().unwrap().max_session;
        k.max(d)
    }

    pub fn record_killed(&self, r: &KilledSessionRecord) -> Result<(), AuditError> {
        if !matches!(r.reason, Reason::ProtectedObject | Reason::GuardObject | Reason::DictionaryView) {
            return Err(AuditError::NotAKillReason(r.reason));
        }
        let mut table = self.killed.lock().unwrap();
        if table.ids.contains(&r.session_id) {
            return Err(AuditError::DuplicateSession(r.session_id));
        }
        append(&mut table.file, &r.to_row())?;
        table.ids.insert(r.session_id);
        table.records.push(r.clone());
        Ok(())
    }

    pub fn record_ddl(&self, r: &DdlLogRecord) -> Result<(), AuditError> {
        let mut table = self.ddl.lock().unwrap();
        append(&mut table.file, &r.to_row())?;
        table.count += 1;
        table.max_session = table.max_session.max(r.session_id);
        Ok(())
    }

    pub fn killed_records(&self) -> Vec<KilledSessionRecord> {
        self.killed.lock().unwrap().records.clone()
    }

    pub fn killed_count(&self) -> usize {
        self.killed.lock().unwrap().records.len()
    }

    pub fn ddl_count(&self) -> u64 {
        self.ddl.lock().unwrap().count
    }

    /// Reads the DDL log back from disk.
    pub fn ddl_records(&self) -> Result<Vec<DdlLogRecord>, AuditError> {
        let _guard = self.ddl.lock().unwrap();
        let path = self.dir.join(DDL_FILE);
        let data = fs::read(&path)?;
        parse_csv(&data, &DDL_HEADER, DdlLogRecord::from_fields)
            .map_err(|detail| AuditError::Corrupt { path, detail })
    }

    /// CSV export of killed sessions whose UTC date lies in `[from, to]`
    /// (either bound optional), oldest first.
    pub fn export_killed(
        &self,
        from: Option<NaiveDate>,
        to: Option<NaiveDate>,
    ) -> Result<String, AuditError> {
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(AuditError::InvalidRange(f, t));
            }
        }
        let mut rows: Vec<KilledSessionRecord> = {
            let table = self.killed.lock().unwrap();
            table
                .records
                .iter()
                .filter(|r| {
                    let day = r.killed_at.date_naive();
                    from.is_none_or(|f| day >= f) && to.is_none_or(|t| day <= t)
                })
                .cloned()
                .collect()
        };
        rows.sort_by_key(|r| r.killed_at);
        let mut out = csv_row(&KILLED_HEADER);
        for r in &rows {
            out.extend(r.to_row());
        }
        Ok(String::from_utf8(out).expect("CSV of UTF-8 fields is UTF-8"))
    }
}

pub fn parse_killed_export(csv_text: &str) -> Result<Vec<KilledSessionRecord>, String> {
    parse_csv(csv_text.as_bytes(), &KILLED_HEADER, KilledSessionRecord::from_fields)
}

fn append(file: &mut File, row: &[u8]) -> io::Result<()> {
    file.write_all(row)?;
    file.sync_data()
}

/// Opens (creating if needed) one audit table. A torn final record left by a
/// crash mid-append was never acknowledged, so it is cut off.
fn open_table<T>(
    path: &Path,
    header: &[&str; 5],
    parse: &impl Fn(&csv::StringRecord) -> Option<T>,
) -> Result<(File, Vec<T>), AuditError> {
    if !path.exists() {
        let mut f = OpenOptions::new().create_new(true).append(true).open(path)?;
        append(&mut f, &csv_row(header))?;
        return Ok((f, Vec::new()));
    }
    let data = fs::read(path)?;
    let (records, torn) = parse_prefix(&data, header, parse)
        .map_err(|detail| AuditError::Corrupt { path: path.to_path_buf(), detail })?;
    if let Some(offset) = torn {
        if offset == 0 {
            return Err(AuditError::Corrupt { path: path.to_path_buf(), detail: "torn header".into() });
        }
        warn!(path = %path.display(), offset, "discarding torn final audit record");
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(offset)?;
        f.sync_data()?;
    }
    let f = OpenOptions::new().append(true).open(path)?;
    Ok((f, records))
}
