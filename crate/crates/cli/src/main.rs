mod args;
mod commands;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use clap::error::ErrorKind;
use clap::Parser;
use gslider_core::{Error, Result};

use args::{Cli, Command};
use manifest::RunManifest;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn execute(cmd: Command) -> Result<()> {
    // replay runs the recorded command with the recorded settings
    let (cmd, cfg) = match cmd {
        Command::Replay { manifest } => {
            let m = RunManifest::read(&manifest)?;
            if matches!(m.command, Command::Replay { .. }) {
                return Err(Error::InvalidArgument(format!(
                    "{} records a replay",
                    manifest.display()
                )));
            }
            let cfg = match m.config {
                Some(c) => Some(c),
                None => commands::resolve_config(&m.command)?,
            };
            (m.command, cfg)
        }
        other => {
            let cfg = commands::resolve_config(&other)?;
            (other, cfg)
        }
    };
    if let Some(c) = &cfg {
        c.validate()?;
    }
    let started = now();
    let clock = Instant::now();
    let outcome = commands::run(&cmd, cfg.as_ref())?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cmd.name().to_string(),
        command: cmd,
        config: cfg,
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        started,
        finished: now(),
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    manifest.write(&outcome.manifest)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
