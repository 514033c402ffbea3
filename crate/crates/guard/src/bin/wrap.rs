use std::path::PathBuf;
use std::process::ExitCode;

use plsql_guard::cli::{EXIT_FAILURE, EXIT_USAGE};
use plsql_guard::wrap::{default_output, resolve_input, wrap_file};

const USAGE: &str = "usage: wrap iname=input_file [oname=output_file]";

fn parse(args: &[String]) -> Option<(PathBuf, Option<PathBuf>)> {
    let mut iname = None;
    let mut oname = None;
    for arg in args {
        let (key, value) = arg.split_once('=')?;
        if value.is_empty() {
            return None;
        }
        let slot = match key {
            "iname" => &mut iname,
            "oname" => &mut oname,
            _ => return None,
        };
        if slot.replace(PathBuf::from(value)).is_some() {
            return None;
        }
    }
    Some((iname?, oname))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((iname, oname)) = parse(&args) else {
        eprintln!("{USAGE}");
        return ExitCode::from(EXIT_USAGE as u8);
    };
    let input = resolve_input(&iname);
    let shown = oname.clone().unwrap_or_else(|| default_output(&input));
    println!("Processing {} to {}", input.display(), shown.display());
    match wrap_file(&iname, oname.as_deref()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wrap: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
