//! `linresp`: optimal linear response experiments from the command line.
//!
//! Every command prints one JSON document (or writes it to `--json`), and
//! can also write a CSV table and plot-data files. Exit codes: 0 on success,
//! 2 for invalid input, 3 when a numerical method fails.

mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::Cli;

/// Environment variable fixing the worker thread count.
const THREADS_VAR: &str = "LINRESP_THREADS";

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    match err.downcast_ref::<linresp::Error>() {
        Some(e) if e.is_validation() => (2, e.kind()),
        Some(e) => (3, e.kind()),
        None => (2, "Usage"),
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let doc = json!({"error": {"kind": kind, "message": message, "exit_code": code}});
    eprint!("{}", output::render_json(&doc));
    ExitCode::from(code)
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var(THREADS_VAR) {
        let threads: usize = raw
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("{THREADS_VAR} must be a positive integer, got '{raw}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("Usage", e.to_string().trim(), 2),
    };
    if let Err(e) = configure_threads() {
        return report("Usage", &e.to_string(), 2);
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            report(kind, &format!("{e:#}"), code)
        }
    }
}
