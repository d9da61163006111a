//! Operating protocols and baselines wired into runnable strategies, plus
//! the exhaustive grid oracle used to validate the swarm.
//!
//! The three PASS protocols differ only in the feasible set handed to the
//! β block: a discrete mode set (selection), a tuning interval (combining),
//! or one shared constant (uniform combining). The baselines are a
//! single-mode TDMA system with per-slot position optimization and a
//! conventional fixed-position digital MISO array.

use crate::channel::UserLayout;
use crate::error::Error;
use crate::precoder::NoiseModel;
use crate::scenario::Scenario;
use crate::swarm::{
    derive_seed, evaluate_fitness, run_pso_kpbf, BetaProtocol, Candidate, ChannelKind,
    PositionGrid, PositionSearch, PsoHyperparams, PsoOutcome, SwarmProblem,
};

/// The runnable strategies, by CLI name: `mode-selection`, `mode-combining`,
/// `uniform`, `single-mode-tdma`, `fixed-miso`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    ModeSelection,
    ModeCombining,
    UniformCombining,
    SingleModeTdma,
    FixedMiso,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::ModeSelection,
        Protocol::ModeCombining,
        Protocol::UniformCombining,
        Protocol::SingleModeTdma,
        Protocol::FixedMiso,
    ];

    pub fn cli_name(&self) -> &'static str {
        match self {
            Protocol::ModeSelection => "mode-selection",
            Protocol::ModeCombining => "mode-combining",
            Protocol::UniformCombining => "uniform",
            Protocol::SingleModeTdma => "single-mode-tdma",
            Protocol::FixedMiso => "fixed-miso",
        }
    }

    pub fn from_cli_name(name: &str) -> Result<Self, Error> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.cli_name() == name)
            .ok_or_else(|| {
                Error::invalid(
                    "protocol",
                    format!(
                        "unknown protocol `{}`; expected one of {}",
                        name,
                        Self::ALL.map(|p| p.cli_name()).join(", ")
                    ),
                )
            })
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

/// Per-user result of one TDMA slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub user: usize,
    pub rate: f64,
    pub positions: Vec<f64>,
    pub beta_pa: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Result record of one strategy run.
///
/// For the TDMA baseline the top-level configuration fields mirror the
/// first slot (per-slot records live in `slots`) and `sum_rate` is the
/// time-shared average. The fixed-MISO baseline reports an empty `beta_pa`:
/// it has no waveguide.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub protocol: Protocol,
    pub sum_rate: f64,
    pub positions: Vec<f64>,
    pub beta_pa: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p_rel: Vec<f64>,
    /// Transmit power of the reported precoder, ‖W‖_F².
    pub precoder_power: f64,
    /// Global-best fitness trace, nondecreasing, length iterations + 1.
    pub trace: Vec<f64>,
    pub failed_evaluations: u64,
    pub slots: Option<Vec<SlotOutcome>>,
}

fn from_pso(protocol: Protocol, outcome: PsoOutcome) -> StrategyOutcome {
    StrategyOutcome {
        protocol,
        sum_rate: outcome.fitness,
        positions: outcome.positions,
        beta_pa: outcome.beta_pa,
        lambda: outcome.lambda,
        p_rel: outcome.p_rel,
        precoder_power: outcome.precoder.power(),
        trace: outcome.trace,
        failed_evaluations: outcome.failed_evaluations,
        slots: None,
    }
}

/// Dispatches a protocol by name.
pub fn run_protocol(
    scenario: &Scenario,
    protocol: Protocol,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<StrategyOutcome, Error> {
    match protocol {
        Protocol::ModeSelection => mode_selection_strategy(scenario, hyper, seed),
        Protocol::ModeCombining => mode_combining_strategy(scenario, hyper, seed),
        Protocol::UniformCombining => uniform_mode_combining_strategy(scenario, hyper, seed),
        Protocol::SingleModeTdma => single_mode_tdma_baseline(scenario, hyper, seed),
        Protocol::FixedMiso => fixed_miso_baseline(scenario, hyper, seed),
    }
}

/// Mode selection: every PA's β restricted to the discrete mode set.
pub fn mode_selection_strategy(
    scenario: &Scenario,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<StrategyOutcome, Error> {
    let spec = scenario.waveguide_spec()?;
    let users = scenario.users()?;
    let problem = SwarmProblem {
        spec: &spec,
        users: &users,
        noise: NoiseModel::new(scenario.sigma2_watts)?,
        p_max: scenario.p_max_watts,
        channel: ChannelKind::Waveguide,
        positions: PositionSearch::Optimize { snap: None },
        beta: BetaProtocol::DiscreteSelection,
    };
    Ok(from_pso(
        Protocol::ModeSelection,
        run_pso_kpbf(&problem, hyper, seed)?,
    ))
}

/// Mode combining: every PA's β tunable within the scenario's interval.
/// A collapsed interval degenerates to the fixed-β search.
pub fn mode_combining_strategy(
    scenario: &Scenario,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<StrategyOutcome, Error> {
    let spec = scenario.waveguide_spec()?;
    let users = scenario.users()?;
    let (lo, hi) = scenario.beta_interval();
    let beta = if lo == hi {
        BetaProtocol::Fixed(lo)
    } else {
        BetaProtocol::ContinuousInterval { lo, hi }
    };
    let problem = SwarmProblem {
        spec: &spec,
        users: &users,
        noise: NoiseModel::new(scenario.sigma2_watts)?,
        p_max: scenario.p_max_watts,
        channel: ChannelKind::Waveguide,
        positions: PositionSearch::Optimize { snap: None },
        beta,
    };
    Ok(from_pso(
        Protocol::ModeCombining,
        run_pso_kpbf(&problem, hyper, seed)?,
    ))
}

/// Uniform mode combining: all PAs pinned to the mean mode constant; only
/// positions and beamforming coordinates are searched.
pub fn uniform_mode_combining_strategy(
    scenario: &Scenario,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<StrategyOutcome, Error> {
    let spec = scenario.waveguide_spec()?;
    let users = scenario.users()?;
    let problem = SwarmProblem {
        spec: &spec,
        users: &users,
        noise: NoiseModel::new(scenario.sigma2_watts)?,
        p_max: scenario.p_max_watts,
        channel: ChannelKind::Waveguide,
        positions: PositionSearch::Optimize { snap: None },
        beta: BetaProtocol::Fixed(scenario.uniform_beta()),
    };
    Ok(from_pso(
        Protocol::UniformCombining,
        run_pso_kpbf(&problem, hyper, seed)?,
    ))
}

/// Single-mode TDMA: the waveguide carries only the fundamental mode, every
/// PA is matched to it, and each user gets a 1/K time slot at full power
/// with its own position optimization. Slot k runs with a seed derived from
/// (seed, k), so slots are decorrelated but the whole baseline stays
/// reproducible.
pub fn single_mode_tdma_baseline(
    scenario: &Scenario,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<StrategyOutcome, Error> {
    let beta_1 = scenario.mode_betas[0];
    let spec = scenario.spec_with_modes(vec![beta_1])?;
    let users = scenario.users()?;
    let k = users.num_users();
    let mut combined_trace = vec![0.0; hyper.iterations + 1];
    let mut slots = Vec::with_capacity(k);
    let mut rate_sum = 0.0;
    let mut failed = 0;
    let mut first: Option<PsoOutcome> = None;
    for user in 0..k {
        let [ux, uy, _] = users.position(user);
        let single = UserLayout::new(vec![(ux, uy)])?;
        let problem = SwarmProblem {
            spec: &spec,
            users: &single,
            noise: NoiseModel::new(scenario.sigma2_watts)?,
            p_max: scenario.p_max_watts,
            channel: ChannelKind::Waveguide,
            positions: PositionSearch::Optimize { snap: None },
            beta: BetaProtocol::Fixed(beta_1),
        };
        let outcome = run_pso_kpbf(&problem, hyper, derive_seed(seed, user as u64))?;
        rate_sum += outcome.fitness;
        failed += outcome.failed_evaluations;
        for (t, &f) in outcome.trace.iter().enumerate() {
            combined_trace[t] += f / k as f64;
        }
        slots.push(SlotOutcome {
            user,
            rate: outcome.fitness,
            positions: outcome.positions.clone(),
            beta_pa: outcome.beta_pa.clone(),
            trace: outcome.trace.clone(),
        });
        if first.is_none() {
            first = Some(outcome);
        }
    }
    let first = first.expect("at least one user");
    Ok(StrategyOutcome {
        protocol: Protocol::SingleModeTdma,
        sum_rate: rate_sum / k as f64,
        positions: first.positions,
        beta_pa: first.beta_pa,
        lambda: first.lambda,
        p_rel: first.p_rel,
        precoder_power: first.precoder.power(),
        trace: combined_trace,
        failed_evaluations: failed,
        slots: Some(slots),
    })
}

/// Evenly spaced antenna positions spanning the placement interval.
pub fn uniform_fixed_positions(x_min: f64, x_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (x_min + x_max)];
    }
    let step = (x_max - x_min) / (n as f64 - 1.0);
    (0..n)
        .map(|i| (x_min + i as f64 * step).min(x_max))
        .collect()
}

/// Fixed-position fully digital MISO reference: N antennas at uniform
/// spacing, each with its own RF chain, LoS channels used directly, and
/// only the beamforming coordinates optimized. Reported with an empty
/// `beta_pa` since there is no waveguide in this baseline.
pub fn fixed_miso_baseline(
    scenario: &Scenario,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<StrategyOutcome, Error> {
    let spec = scenario.waveguide_spec()?;
    let users = scenario.users()?;
    let positions = uniform_fixed_positions(0.0, scenario.waveguide_length, scenario.num_pas);
    let problem = SwarmProblem {
        spec: &spec,
        users: &users,
        noise: NoiseModel::new(scenario.sigma2_watts)?,
        p_max: scenario.p_max_watts,
        channel: ChannelKind::DirectAntenna,
        positions: PositionSearch::Fixed(positions),
        beta: BetaProtocol::Fixed(scenario.mode_betas[0]),
    };
    let mut result = from_pso(Protocol::FixedMiso, run_pso_kpbf(&problem, hyper, seed)?);
    result.beta_pa = Vec::new();
    Ok(result)
}

/// Grid resolution of the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridResolution {
    pub position_points: usize,
    pub lambda_points: usize,
    pub p_points: usize,
}

/// Exhaustive-search result; `candidate` is the first maximizer in
/// enumeration order.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub fitness: f64,
    pub candidate: Candidate,
    pub evaluations: u64,
}

/// Evaluates the full Cartesian grid over snapped positions, discrete mode
/// choices, and z grids on [−2, 2], returning the maximizer.
///
/// Deliberately restricted to desk-sized instances (N ≤ 2, M ≤ 2, ≤ 50
/// position points, ≤ 10 z points per dimension); anything larger is
/// refused with the estimated evaluation count. Positions come from the
/// same [`PositionGrid`] the swarm snaps to, so a grid-restricted swarm
/// searches exactly this set.
pub fn grid_search_oracle(
    scenario: &Scenario,
    res: &GridResolution,
) -> Result<OracleOutcome, Error> {
    let n = scenario.num_pas;
    let m = scenario.num_modes();
    let k = scenario.num_users;
    if n > 2 {
        return Err(Error::SearchSpaceTooLarge {
            detail: format!("{} PAs; the oracle handles at most 2", n),
        });
    }
    if m > 2 {
        return Err(Error::SearchSpaceTooLarge {
            detail: format!("{} modes; the oracle handles at most 2", m),
        });
    }
    if res.position_points > 50 || res.lambda_points > 10 || res.p_points > 10 {
        return Err(Error::SearchSpaceTooLarge {
            detail: format!(
                "resolution {:?} exceeds 50 position / 10 z points",
                res
            ),
        });
    }
    if res.position_points < 2 || res.lambda_points < 1 || res.p_points < 1 {
        return Err(Error::invalid("grid_resolution", "need >= 2 position and >= 1 z points"));
    }

    let spec = scenario.waveguide_spec()?;
    let users = scenario.users()?;
    let grid = PositionGrid::new(&spec, res.position_points)?;
    let problem = SwarmProblem {
        spec: &spec,
        users: &users,
        noise: NoiseModel::new(scenario.sigma2_watts)?,
        p_max: scenario.p_max_watts,
        channel: ChannelKind::Waveguide,
        positions: PositionSearch::Optimize {
            snap: Some(grid.clone()),
        },
        beta: if m >= 2 {
            BetaProtocol::DiscreteSelection
        } else {
            BetaProtocol::Fixed(scenario.mode_betas[0])
        },
    };

    // Ascending position-index combinations whose coordinates respect d_min.
    let mut position_sets: Vec<Vec<f64>> = Vec::new();
    match n {
        1 => {
            for i in 0..grid.points() {
                position_sets.push(vec![grid.coord(i)]);
            }
        }
        2 => {
            for i in 0..grid.points() {
                for j in i + 1..grid.points() {
                    if grid.coord(j) - grid.coord(i) >= spec.d_min * (1.0 - 1e-12) {
                        position_sets.push(vec![grid.coord(i), grid.coord(j)]);
                    }
                }
            }
        }
        _ => unreachable!("capped above"),
    }

    let beta_sets: Vec<Vec<f64>> = (0..m.pow(n as u32))
        .map(|combo| {
            (0..n)
                .map(|pa| scenario.mode_betas[(combo / m.pow(pa as u32)) % m])
                .collect()
        })
        .collect();

    let z_axis = |points: usize| -> Vec<f64> {
        if points == 1 {
            vec![0.0]
        } else {
            (0..points)
                .map(|i| -2.0 + 4.0 * i as f64 / (points as f64 - 1.0))
                .collect()
        }
    };
    let lambda_axis = z_axis(res.lambda_points);
    // A single user's softmax is identically 1; its z_p grid collapses.
    let p_axis = if k == 1 { vec![0.0] } else { z_axis(res.p_points) };

    let lambda_total = lambda_axis.len().pow(k as u32) as u64;
    let p_total = p_axis.len().pow(k as u32) as u64;
    let estimate = position_sets.len() as u64 * beta_sets.len() as u64 * lambda_total * p_total;
    if estimate > 5_000_000 {
        return Err(Error::SearchSpaceTooLarge {
            detail: format!("{} evaluations estimated; cap is 5e6", estimate),
        });
    }

    let decode = |axis: &[f64], mut index: u64| -> Vec<f64> {
        (0..k)
            .map(|_| {
                let v = axis[(index % axis.len() as u64) as usize];
                index /= axis.len() as u64;
                v
            })
            .collect()
    };

    let mut best: Option<(f64, Candidate)> = None;
    let mut evaluations = 0u64;
    for positions in &position_sets {
        for beta_pa in &beta_sets {
            for li in 0..lambda_total {
                let z_lambda = decode(&lambda_axis, li);
                for pi in 0..p_total {
                    let z_p = decode(&p_axis, pi);
                    let candidate = Candidate {
                        positions: positions.clone(),
                        beta_pa: beta_pa.clone(),
                        z_lambda: z_lambda.clone(),
                        z_p,
                    };
                    let (fitness, _) = evaluate_fitness(&problem, &candidate);
                    evaluations += 1;
                    if best.as_ref().map_or(true, |(b, _)| fitness > *b) {
                        best = Some((fitness, candidate));
                    }
                }
            }
        }
    }
    let (fitness, candidate) = best.expect("grid is nonempty");
    Ok(OracleOutcome {
        fitness,
        candidate,
        evaluations,
    })
}
