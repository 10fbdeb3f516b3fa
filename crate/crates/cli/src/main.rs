//! `abc`: capacity regions, strong-converse exponents and exhaustive bound
//! checks for two-receiver broadcast channels with degraded message sets.
//!
//! Exit status: 0 on success, 1 when a bound check fails, 2 on invalid input
//! or any other error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

/// Input rejected before any output was written.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "abc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity region polygon from a supporting-hyperplane sweep.
    Region(Common),
    /// Strong-converse exponent at a list or grid of rate pairs.
    Exponent(Common),
    /// Exhaustive correct-probability bound checks on small codes.
    Verify(Common),
    /// Hyperplane sweep repeated under several optimizer budgets.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel spec JSON.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_gamma: Option<usize>,
    #[arg(long)]
    grid_mu: Option<usize>,
    /// Show values on stdout in bits. Files stay in nats.
    #[arg(long)]
    bits: bool,
    /// Budget preset (fast, default, thorough) or a budget JSON path.
    #[arg(long)]
    budget: Option<String>,
    /// Rate pair `R1,R2` in nats; repeatable.
    #[arg(long = "rate", value_parser = parse_rate)]
    rates: Vec<[f64; 2]>,
    /// Code document; repeatable.
    #[arg(long = "code")]
    codes: Vec<PathBuf>,
}

fn parse_rate(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected R1,R2 but got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([parse(a)?, parse(b)?])
}

impl From<Common> for Overrides {
    fn from(c: Common) -> Self {
        Overrides {
            config: c.config,
            channel: c.channel,
            out: c.out,
            seed: c.seed,
            grid_gamma: c.grid_gamma,
            grid_mu: c.grid_mu,
            bits: c.bits,
            budget: c.budget,
            rates: c.rates,
            codes: c.codes,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let (name, common, cmd): (&str, Common, fn(&RunConfig) -> anyhow::Result<i32>) =
        match cli.command {
            Command::Region(c) => ("region", c, commands::region),
            Command::Exponent(c) => ("exponent", c, commands::exponent),
            Command::Verify(c) => ("verify", c, commands::verify),
            Command::Sweep(c) => ("sweep", c, commands::sweep),
        };
    let cfg = RunConfig::resolve(name, common.into())?;
    cmd(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            if e.downcast_ref::<Invalid>().is_some() {
                eprintln!("invalid input: {e:#}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}
