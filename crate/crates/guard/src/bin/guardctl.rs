use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use plsql_guard::cli::{prompt_new_password, read_password_file, EXIT_FAILURE};
use plsql_guard::protocol::{console_reset_password, AdminClient, AdminResponse};

/// Admin client for the guard server.
#[derive(Parser)]
#[command(name = "guardctl", version)]
struct Args {
    /// Admin port address.
    #[arg(long, default_value = "127.0.0.1:7522")]
    server: String,
    /// Read the admin password from this file instead of prompting.
    #[arg(long)]
    password_file: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Show protection state and counters.
    Status,
    /// Turn protection on or off.
    SetSecurity { state: OnOff },
    /// Change the admin password.
    SetPassword {
        /// Read the new password from this file instead of prompting.
        #[arg(long)]
        new_password_file: Option<PathBuf>,
    },
    /// Add an object to the protection list.
    AddObject { owner: String, obj_type: String, name: String },
    /// Remove an object from the protection list.
    RemoveObject { owner: String, obj_type: String, name: String },
    /// Allow a user to change a protected object.
    Grant {
        user: String,
        owner: String,
        obj_type: String,
        name: String,
        #[arg(long)]
        start_date: Option<NaiveDate>,
        #[arg(long)]
        end_date: Option<NaiveDate>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=23))]
        start_hour: Option<u8>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=23))]
        end_hour: Option<u8>,
    },
    /// Withdraw a grant.
    Revoke { user: String, owner: String, obj_type: String, name: String },
    /// Export killed sessions as CSV.
    ExportKilled {
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List protected objects.
    ListObjects,
    /// List grants.
    ListGrants,
    /// Reset the admin password over the local console socket.
    ResetPassword {
        #[arg(long)]
        console: PathBuf,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("guardctl: {msg}");
    ExitCode::from(EXIT_FAILURE as u8)
}

/// The admin-protocol words for a subcommand.
fn command_words(cmd: &Cmd, password: &str, new_password: Option<&str>) -> Vec<String> {
    let s = |v: &str| v.to_string();
    match cmd {
        Cmd::Status => vec![s("STATUS")],
        Cmd::SetSecurity { state } => {
            vec![s("SET_SECURITY"), s(match state { OnOff::On => "on", OnOff::Off => "off" })]
        }
        Cmd::SetPassword { .. } => vec![s("SET_PASSWORD"), s(password), s(new_password.unwrap_or_default())],
        Cmd::AddObject { owner, obj_type, name } => vec![s("ADD_OBJECT"), s(owner), s(obj_type), s(name)],
        Cmd::RemoveObject { owner, obj_type, name } => vec![s("REMOVE_OBJECT"), s(owner), s(obj_type), s(name)],
        Cmd::Grant { user, owner, obj_type, name, start_date, end_date, start_hour, end_hour } => {
            let mut w = vec![s("GRANT"), s(user), s(owner), s(obj_type), s(name)];
            if let Some(d) = start_date {
                w.push(format!("start_date={d}"));
            }
            if let Some(d) = end_date {
                w.push(format!("end_date={d}"));
            }
            if let Some(h) = start_hour {
                w.push(format!("start_hour={h}"));
            }
            if let Some(h) = end_hour {
                w.push(format!("end_hour={h}"));
            }
            w
        }
        Cmd::Revoke { user, owner, obj_type, name } => vec![s("REVOKE"), s(user), s(owner), s(obj_type), s(name)],
        Cmd::ExportKilled { from, to, .. } => {
            let mut w = vec![s("EXPORT_KILLED")];
            if let Some(d) = from {
                w.push(format!("from={d}"));
            }
            if let Some(d) = to {
                w.push(format!("to={d}"));
            }
            w
        }
        Cmd::ListObjects => vec![s("LIST_OBJECTS")],
        Cmd::ListGrants => vec![s("LIST_GRANTS")],
        Cmd::ResetPassword { .. } => Vec::new(),
    }
}

fn print_response(resp: &AdminResponse, out_file: Option<&PathBuf>) -> io::Result<()> {
    let mut stdout = io::stdout().lock();
    match &resp.payload {
        Some(bytes) => match out_file {
            Some(path) => {
                fs::write(path, bytes)?;
                writeln!(stdout, "{}", resp.line)?;
            }
            None => stdout.write_all(bytes)?,
        },
        None => {
            writeln!(stdout, "{}", resp.line)?;
            for row in &resp.body {
                writeln!(stdout, "{row}")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();

    if let Cmd::ResetPassword { console } = &args.cmd {
        return match console_reset_password(console) {
            Ok(line) if line.starts_with("OK") => {
                println!("{line}");
                ExitCode::SUCCESS
            }
            Ok(line) => fail(line),
            Err(e) => fail(e),
        };
    }

    let password = match &args.password_file {
        Some(p) => read_password_file(p),
        None => rpassword::prompt_password("Admin password: "),
    };
    let password = match password {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let new_password = match &args.cmd {
        Cmd::SetPassword { new_password_file: Some(p) } => Some(read_password_file(p)),
        Cmd::SetPassword { new_password_file: None } => Some(prompt_new_password("New admin password")),
        _ => None,
    };
    let new_password = match new_password.transpose() {
        Ok(p) => p,
        Err(e) => return fail(e),
    };

    let mut client = match AdminClient::connect(&args.server, &password) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let words = command_words(&args.cmd, &password, new_password.as_deref());
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let resp = match client.command(&refs) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let _ = client.command(&["QUIT"]);
    if let Some((code, message)) = resp.error() {
        return fail(format!("{code} {message}"));
    }
    let out_file = match &args.cmd {
        Cmd::ExportKilled { out, .. } => out.as_ref(),
        _ => None,
    };
    match print_response(&resp, out_file) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
