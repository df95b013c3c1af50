//! Batch entry points: forge datasets, train, sample, edit, evaluate and check gradients.
//!
//! Every command takes a [`RunConfig`] (defaults, then `--config FILE`, then `--seed`,
//! then dotted `--key value` overrides) and returns a JSON report that embeds the
//! resolved config.

pub mod args;
pub mod commands;
pub mod config;
pub mod dataset;
mod error;

pub use args::{parse, Command, Invocation, USAGE};
pub use config::{Dataset, RunConfig};
pub use error::CliError;

use serde_json::Value;

/// Runs a parsed invocation and returns its report. The report is also written to
/// `paths.report` when set.
pub fn execute(inv: &Invocation) -> Result<Value, CliError> {
    let cfg = RunConfig::resolve(inv.config.as_deref(), inv.seed, &inv.overrides)?;
    let report = match inv.command {
        Command::Forge => commands::forge::run(&cfg)?,
        Command::Train => commands::train::run(&cfg)?,
        Command::Sample => commands::generate::run_sample(&cfg)?,
        Command::Edit => commands::generate::run_edit(&cfg)?,
        Command::Eval => commands::eval::run(&cfg)?,
        Command::Gradcheck => commands::gradcheck::run(&cfg)?,
    };
    if let Some(p) = &cfg.paths.report {
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

/// Parses `args` (without the program name) and runs the command. A report whose
/// `passed` field is false is returned as a numerical failure alongside it.
pub fn run(args: &[String]) -> (Option<Value>, Result<(), CliError>) {
    let inv = match parse(args) {
        Ok(inv) => inv,
        Err(e) => return (None, Err(e)),
    };
    match execute(&inv) {
        Ok(report) => {
            let status = match report.get("passed") {
                Some(Value::Bool(false)) => Err(CliError::Numerical(format!("{} checks failed", inv.command.name()))),
                _ => Ok(()),
            };
            (Some(report), status)
        }
        Err(e) => (None, Err(e)),
    }
}
