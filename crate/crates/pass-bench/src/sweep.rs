//! Experiment sweeps and their tabular emission. Jobs fan out over a
//! worker pool; records are collected and emitted in deterministic
//! (protocol, sweep value, seed) order regardless of completion order, so
//! identical inputs give byte-identical tables up to the wall-time column.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pass_core::protocols::{run_protocol, Protocol, StrategyOutcome};
use pass_core::scenario::{dbm_to_watts, Scenario};
use pass_core::swarm::PsoHyperparams;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Sweepable scenario dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Power budget; sweep values are dBm.
    Pmax,
    /// PA count; sweep values must be positive integers.
    NumPas,
}

impl SweepVar {
    pub fn cli_name(&self) -> &'static str {
        match self {
            SweepVar::Pmax => "pmax",
            SweepVar::NumPas => "n",
        }
    }

    pub fn from_cli_name(name: &str) -> Result<Self> {
        match name {
            "pmax" => Ok(SweepVar::Pmax),
            "n" => Ok(SweepVar::NumPas),
            other => bail!("unknown sweep variable '{other}'; use 'pmax' or 'n'"),
        }
    }

    /// Rebuilds the scenario at one sweep point.
    pub fn apply(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        match self {
            SweepVar::Pmax => {
                if !value.is_finite() {
                    bail!("pmax sweep value must be finite dBm, got {value}");
                }
                Ok(base.clone().with_p_max_watts(dbm_to_watts(value)))
            }
            SweepVar::NumPas => {
                if value.fract() != 0.0 || value < 1.0 || value > 4096.0 {
                    bail!("n sweep value must be an integer in 1..=4096, got {value}");
                }
                Ok(base.clone().with_num_pas(value as usize))
            }
        }
    }
}

/// Twelve hex characters of the SHA-256 over the scenario's canonical JSON
/// form, after sweep substitution; ties every row to the exact physics it
/// ran under.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let canonical = serde_json::to_string(scenario).expect("scenario serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// One benchmark run: identification, outcome, and timing. `outcome` keeps
/// the full trace and final configuration for trace files and summaries;
/// the CSV row carries the scalar columns only.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub sweep_var: Option<SweepVar>,
    pub sweep_value: Option<f64>,
    pub sum_rate: Option<f64>,
    pub wall_ms: u64,
    pub status: String,
    pub outcome: Option<StrategyOutcome>,
}

/// Executes one protocol on one scenario. Solver failures land in
/// `status`; they never panic or abort a surrounding sweep.
pub fn run_once(
    scenario: &Scenario,
    protocol: Protocol,
    hyper: &PsoHyperparams,
    seed: u64,
) -> RunRecord {
    let hash = scenario_hash(scenario);
    let started = Instant::now();
    let result = run_protocol(scenario, protocol, hyper, seed);
    let wall_ms = started.elapsed().as_millis() as u64;
    match result {
        Ok(outcome) => RunRecord {
            scenario_hash: hash,
            protocol,
            seed,
            sweep_var: None,
            sweep_value: None,
            sum_rate: Some(outcome.sum_rate),
            wall_ms,
            status: "ok".into(),
            outcome: Some(outcome),
        },
        Err(err) => RunRecord {
            scenario_hash: hash,
            protocol,
            seed,
            sweep_var: None,
            sweep_value: None,
            sum_rate: None,
            wall_ms,
            status: err.to_string(),
            outcome: None,
        },
    }
}

/// Runs |protocols| x |values| x |seeds| jobs on the worker pool and
/// returns them in that nesting order. Sweep points that cannot be applied
/// (for example a fractional PA count) become flagged rows carrying the
/// base scenario's hash.
pub fn sweep(
    base: &Scenario,
    protocols: &[Protocol],
    var: SweepVar,
    values: &[f64],
    seeds: &[u64],
    hyper: &PsoHyperparams,
) -> Vec<RunRecord> {
    let mut jobs = Vec::with_capacity(protocols.len() * values.len() * seeds.len());
    for &protocol in protocols {
        for &value in values {
            for &seed in seeds {
                jobs.push((protocol, value, seed));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(protocol, value, seed)| {
            let mut record = match var.apply(base, value) {
                Ok(scenario) => run_once(&scenario, protocol, hyper, seed),
                Err(err) => RunRecord {
                    scenario_hash: scenario_hash(base),
                    protocol,
                    seed,
                    sweep_var: None,
                    sweep_value: None,
                    sum_rate: None,
                    wall_ms: 0,
                    status: format!("{err:#}"),
                    outcome: None,
                },
            };
            record.sweep_var = Some(var);
            record.sweep_value = Some(value);
            record
        })
        .collect()
}

pub const RESULT_COLUMNS: [&str; 8] = [
    "scenario_hash",
    "protocol",
    "seed",
    "sweep_var",
    "sweep_value",
    "sum_rate_bps_hz",
    "wall_ms",
    "status",
];

/// Writes the result table: a fixed header plus one row per record.
/// Floats print in shortest round-trip decimal; absent fields (no sweep
/// variable, failed run) are empty.
pub fn emit_results<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RESULT_COLUMNS)?;
    for r in records {
        out.write_record([
            r.scenario_hash.as_str(),
            r.protocol.cli_name(),
            &r.seed.to_string(),
            r.sweep_var.map(|v| v.cli_name()).unwrap_or(""),
            &r.sweep_value.map(|v| v.to_string()).unwrap_or_default(),
            &r.sum_rate.map(|v| v.to_string()).unwrap_or_default(),
            &r.wall_ms.to_string(),
            r.status.as_str(),
        ])?;
    }
    out.flush().context("flushing result table")?;
    Ok(())
}

/// Writes the optional per-run trace: global-best sum rate after
/// initialization (iteration 0) and after each iteration.
pub fn emit_trace<W: Write>(trace: &[f64], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["iteration", "gbest_sum_rate_bps_hz"])?;
    for (i, g) in trace.iter().enumerate() {
        out.write_record([i.to_string(), g.to_string()])?;
    }
    out.flush().context("flushing trace table")?;
    Ok(())
}
