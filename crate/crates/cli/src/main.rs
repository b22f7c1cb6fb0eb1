use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use votecheck_cli::config::{parse_banned, parse_config, preset};
use votecheck_cli::report::{exit_code, human, run_scenario, to_json, Check, CONFIG_ERROR_EXIT};
use votecheck_core::protocol::ScenarioConfig;
use votecheck_core::{ConfigError, Error};

#[derive(Parser)]
#[command(name = "votecheck", version, about = "Trace-model anonymity and secrecy checks for vVote")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Masked trace equivalence of the two vote-swapped worlds.
    Anonymity(Common),
    /// Whether the intruder can learn any banned fact.
    Secrecy {
        #[command(flatten)]
        common: Common,
        /// Banned facts in the rendering grammar, e.g. "<Archimedes,Babbage>".
        #[arg(long, num_args = 1..)]
        banned: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// restricted-holds, full-dy-fails, corrupt-pod, corrupt-authority, corrupt-wbb-holds
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Seconds before giving up with resource_limit.
    #[arg(long)]
    time_budget: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the rendered counterexample here, one event per line.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let base = match &self.preset {
            Some(p) => preset(p)?,
            None => ScenarioConfig::defaults(2, 3),
        };
        let mut cfg = match &self.config {
            Some(path) => parse_config(path, base)?,
            None => base,
        };
        if let Some(n) = self.max_states {
            cfg.limits.max_states = n;
        }
        if let Some(n) = self.max_depth {
            cfg.limits.max_depth = n;
        }
        if let Some(n) = self.workers {
            cfg.limits.workers = n;
        }
        if let Some(s) = self.time_budget {
            cfg.limits.time_budget = Some(Duration::from_secs(s));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    let (check, common, banned) = match &cli.cmd {
        Cmd::Anonymity(c) => (Check::Anonymity, c, None),
        Cmd::Secrecy { common, banned } => (Check::Secrecy, common, Some(banned)),
    };
    let mut cfg = common.scenario()?;
    if let Some(b) = banned {
        if !b.is_empty() {
            cfg.banned = parse_banned(&cfg, b)?;
        }
    }
    let report = run_scenario(check, &cfg)?;
    print!("{}", human(&report));
    if let Some(path) = &common.report {
        std::fs::write(path, to_json(&report) + "\n")
            .map_err(|e| ConfigError::new(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &common.trace_out {
        let lines = report.counterexample_rendered.clone().unwrap_or_default();
        let mut text = lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| ConfigError::new(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(exit_code(report.verdict.result))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("votecheck: {e}");
            ExitCode::from(CONFIG_ERROR_EXIT as u8)
        }
    }
}
