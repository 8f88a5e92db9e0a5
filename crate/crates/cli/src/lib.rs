//! Command-line driver and file formats for `orthofilt-core`.
//!
//! - [`tokens`]: the OTKN binary token-matrix format,
//! - [`table`]: scaling tables as CSV,
//! - [`params`]: allocator parameters as JSON,
//! - [`report`]: JSON run reports,
//! - [`args`] and [`commands`]: the `orthofilt` command surface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod error;
pub mod params;
pub mod report;
pub mod table;
pub mod tokens;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use serde_json::Value;

use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Checks that clap's declarative rules cannot express.
fn usage_check(cli: &Cli) -> Result<(), clap::Error> {
    if let Command::Flops(f) = &cli.command {
        if f.anchor.len() != 2 {
            return Err(Cli::command().error(
                ErrorKind::WrongNumberOfValues,
                format!("flops needs exactly two --anchor values, got {}", f.anchor.len()),
            ));
        }
    }
    Ok(())
}

fn config_of(cli: &Cli) -> Value {
    let mut v = match &cli.command {
        Command::Filter(a) => serde_json::to_value(a),
        Command::Train(a) => serde_json::to_value(a),
        Command::GradCheck(a) => serde_json::to_value(a),
        Command::FitLpep(a) => serde_json::to_value(a),
        Command::InferMdl(a) => serde_json::to_value(a),
        Command::Bound(a) => serde_json::to_value(a),
        Command::Flops(a) => serde_json::to_value(a),
        Command::FlopsEstimate(a) => serde_json::to_value(a),
        Command::Sweep(a) => serde_json::to_value(a),
        Command::Synth(a) => serde_json::to_value(a),
    }
    .expect("argument structs serialize");
    if let Value::Object(map) = &mut v {
        map.insert("out".into(), serde_json::to_value(&cli.out).expect("path serializes"));
    }
    v
}

/// Parses `args`, runs the command and writes its report. Exit codes: 0 on
/// success, 1 on a computation error, 2 on a usage error.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args).and_then(|c| usage_check(&c).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let (report, code) = commands::execute(&cli.command, config_of(&cli));
    let text = report::to_json(&report);
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e)),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if let Some(err) = &report.error {
        eprintln!("error: {}", err.message);
    }
    ExitCode::from(code)
}
