use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use clap::Parser;
use signal_hook::consts::{SIGINT, SIGTERM};
use signal_hook::iterator::Signals;

use plsql_guard::admin::{initialize_state, is_uninitialized};
use plsql_guard::cli::{init_logging, prompt_new_password, read_password_file, EXIT_FAILURE};
use plsql_guard::config::load_config;
use plsql_guard::server::{system_clock, Server};

/// PL/SQL guard proxy server.
#[derive(Parser)]
#[command(name = "guardd", version)]
struct Args {
    /// Server configuration file (key=value).
    #[arg(long)]
    config: PathBuf,
    /// Initialize a fresh state directory and exit.
    #[arg(long)]
    init: bool,
    /// Read the initial admin password from this file instead of prompting.
    #[arg(long, requires = "init")]
    password_file: Option<PathBuf>,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("guardd: {msg}");
    ExitCode::from(EXIT_FAILURE as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    init_logging();
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };

    if args.init {
        if !is_uninitialized(&cfg.state_dir) {
            return fail(format!("state directory {} is already initialized", cfg.state_dir.display()));
        }
        let password = match &args.password_file {
            Some(p) => read_password_file(p),
            None => prompt_new_password("Admin password"),
        };
        let password = match password {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        return match initialize_state(&cfg.state_dir, &password, cfg.dictionary_views.clone()) {
            Ok(_) => {
                println!("initialized {}", cfg.state_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }

    let server = match Server::bind(&cfg, system_clock()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let handle = server.shutdown_handle();
    let mut signals = match Signals::new([SIGTERM, SIGINT]) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    thread::spawn(move || {
        if signals.forever().next().is_some() {
            handle.shutdown();
        }
    });
    println!("guardd listening data={} admin={}", server.data_addr(), server.admin_addr());
    let _ = std::io::stdout().flush();
    server.run();
    ExitCode::SUCCESS
}
