//! Command-line benchmark runner: single protocol runs and parameter
//! sweeps over scenario files, with CSV output.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pass_bench::config::load_scenario;
use pass_bench::sweep::{emit_results, emit_trace, run_once, sweep, SweepVar};
use pass_core::protocols::Protocol;
use pass_core::swarm::PsoHyperparams;

#[derive(Parser)]
#[command(
    name = "pass-bench",
    about = "Sum-rate benchmarks for pinching-antenna placement and precoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol once and write a one-row result table.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// One of: mode-selection, mode-combining, uniform,
        /// single-mode-tdma, fixed-miso.
        #[arg(long)]
        protocol: String,
        /// Swarm seed.
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of the global-best trace (iteration, sum rate).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a protocol grid over one sweep variable and many seeds.
    Sweep {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated protocol names.
        #[arg(long)]
        protocols: String,
        /// Sweep variable: 'pmax' (values in dBm) or 'n' (PA counts).
        #[arg(long)]
        var: String,
        /// Comma-separated sweep values.
        #[arg(long)]
        values: String,
        /// Seeds: either 'lo..hi' (inclusive on both ends) or a
        /// comma-separated list.
        #[arg(long)]
        seeds: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_protocols(text: &str) -> Result<Vec<Protocol>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Protocol::from_cli_name(t).map_err(Into::into))
        .collect()
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad sweep value '{t}'")))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("--values needs at least one entry");
    }
    Ok(values)
}

/// `lo..hi` is inclusive on both ends, so `0..19` is twenty seeds.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().with_context(|| format!("bad seed '{lo}'"))?;
        let hi: u64 = hi.trim().parse().with_context(|| format!("bad seed '{hi}'"))?;
        if hi < lo {
            bail!("seed range {lo}..{hi} is empty");
        }
        return Ok((lo..=hi).collect());
    }
    let seeds: Vec<u64> = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().with_context(|| format!("bad seed '{t}'")))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        bail!("--seeds needs at least one entry");
    }
    Ok(seeds)
}

fn open_out(path: &PathBuf) -> Result<BufWriter<File>> {
    let file = File::create(path)
        .with_context(|| format!("cannot create output file {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            protocol,
            seed,
            out,
            trace,
        } => {
            let scenario = load_scenario(&scenario)?;
            let protocol = Protocol::from_cli_name(&protocol)?;
            let hyper = PsoHyperparams::default();
            let record = run_once(&scenario, protocol, &hyper, seed);
            emit_results(std::slice::from_ref(&record), open_out(&out)?)?;
            let Some(outcome) = &record.outcome else {
                bail!("{protocol} failed: {}", record.status);
            };
            if let Some(path) = trace {
                emit_trace(&outcome.trace, open_out(&path)?)?;
            }
            println!(
                "{} seed={} sum_rate={:.6} bits/s/Hz wall={} ms",
                protocol, seed, outcome.sum_rate, record.wall_ms
            );
            println!("positions_m={:?}", outcome.positions);
            println!("beta_pa_rad_per_m={:?}", outcome.beta_pa);
            println!(
                "lambda={:?} p_rel={:?} precoder_power_w={:.6e}",
                outcome.lambda, outcome.p_rel, outcome.precoder_power
            );
            Ok(())
        }
        Command::Sweep {
            scenario,
            protocols,
            var,
            values,
            seeds,
            out,
        } => {
            let scenario = load_scenario(&scenario)?;
            let protocols = parse_protocols(&protocols)?;
            let var = SweepVar::from_cli_name(&var)?;
            let values = parse_values(&values)?;
            let seeds = parse_seeds(&seeds)?;
            let hyper = PsoHyperparams::default();
            let records = sweep(&scenario, &protocols, var, &values, &seeds, &hyper);
            emit_results(&records, open_out(&out)?)?;
            let failed = records.iter().filter(|r| r.status != "ok").count();
            println!(
                "wrote {} rows to {} ({} failed)",
                records.len(),
                out.display(),
                failed
            );
            Ok(())
        }
    }
}
