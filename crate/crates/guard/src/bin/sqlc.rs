use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use plsql_guard::cli::EXIT_FAILURE;
use plsql_guard::protocol::{DataClient, Reply};
use plsql_guard::script::split_script;

/// Sends SQL statements through the guard and prints a transcript.
#[derive(Parser)]
#[command(name = "sqlc", version)]
struct Args {
    /// Data port address.
    #[arg(long, default_value = "127.0.0.1:7521")]
    server: String,
    /// Database user to log in as.
    #[arg(long)]
    user: String,
    /// Script file; standard input when omitted.
    file: Option<PathBuf>,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("sqlc: {msg}");
    ExitCode::from(EXIT_FAILURE as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match &args.file {
        Some(p) => fs::read_to_string(p),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map(|_| s)
        }
    };
    let text = match text {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let statements = match split_script(&text) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if statements.is_empty() {
        return ExitCode::SUCCESS;
    }
    let mut client = match DataClient::connect(&args.server, &args.user) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut out = io::stdout().lock();
    for stmt in statements {
        for line in stmt.text.lines() {
            let _ = writeln!(out, "> {line}");
        }
        let reply = match client.execute(stmt.text) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        for line in reply.transcript_lines() {
            let _ = writeln!(out, "< {line}");
        }
        if matches!(reply, Reply::Kill(_)) {
            let _ = out.flush();
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    }
    ExitCode::SUCCESS
}
