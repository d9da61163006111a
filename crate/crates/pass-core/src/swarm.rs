//! Hybrid continuous/binary particle swarm over placement, propagation
//! constants, and beamforming coordinates.
//!
//! A particle is the tuple (x, β^PA, z_λ, z_p). Position and z blocks move
//! by the standard inertia/cognitive/social velocity rule followed by a
//! feasibility map (position repair or box clamp). Discrete β blocks move
//! in probability space: velocities pass through a sigmoid and the bits are
//! resampled, which is what makes the mode-selection protocol searchable.
//!
//! Determinism contract: every particle owns one counter-mode RNG substream
//! derived from (seed, particle index), and consumes draws in a fixed
//! documented order (position block, β block, z_λ, z_p; within a block,
//! element by element). Global-best bookkeeping happens once per iteration
//! after all particles have moved, with strict-improvement tie-breaking and
//! lowest-particle-index wins among equal improvements. Two runs with the
//! same seed therefore produce bit-identical traces regardless of how the
//! per-particle work is scheduled.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{effective_channel, los_channel, UserLayout};
use crate::error::Error;
use crate::precoder::{
    exp_reparam, kpbf_unnormalized, normalize_power, softmax, sum_rate, NoiseModel, Precoder,
};
use crate::waveguide::{cascaded_gain_matrix, PaConfiguration, WaveguideSpec};
use crate::C64;

/// Half-width of the uniform interval used to initialize z_λ.
const Z_INIT_HALF_WIDTH: f64 = 2.0;

/// Logistic sigmoid, the bit-acceptance probability of the binary update.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Splitmix-style seed derivation for nested runs (e.g. one PSO run per
/// TDMA slot) so sub-runs get decorrelated but reproducible streams.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Swarm hyperparameters. Defaults: 50 particles, 200 iterations,
/// ω = 0.7, c1 = c2 = 1.5, velocity clamps sized to each block's feasible
/// range, and |z| ≤ 30 for the unconstrained beamforming coordinates
/// (λ = e^±30 covers everything from matched filtering to hard zero
/// forcing at double precision).
#[derive(Debug, Clone, PartialEq)]
pub struct PsoHyperparams {
    pub num_particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Position velocity clamp as a fraction of x_max − x_min.
    pub position_velocity_frac: f64,
    /// β velocity clamp as a fraction of the protocol interval width.
    pub beta_velocity_frac: f64,
    pub z_velocity_clamp: f64,
    pub binary_velocity_clamp: f64,
    /// Box bound for z_λ and z_p.
    pub z_bound: f64,
}

impl Default for PsoHyperparams {
    fn default() -> Self {
        Self {
            num_particles: 50,
            iterations: 200,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            position_velocity_frac: 0.1,
            beta_velocity_frac: 0.1,
            z_velocity_clamp: 2.0,
            binary_velocity_clamp: 6.0,
            z_bound: 30.0,
        }
    }
}

impl PsoHyperparams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.num_particles == 0 {
            return Err(Error::invalid("num_particles", "need at least one particle"));
        }
        let positive = [
            ("position_velocity_frac", self.position_velocity_frac),
            ("beta_velocity_frac", self.beta_velocity_frac),
            ("z_velocity_clamp", self.z_velocity_clamp),
            ("binary_velocity_clamp", self.binary_velocity_clamp),
            ("z_bound", self.z_bound),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(name, "must be nonnegative and finite"));
            }
        }
        Ok(())
    }
}

/// Uniform position grid over the spec's placement interval, used when the
/// search must stay on a discrete set (so an exhaustive oracle over the
/// same grid sees exactly the same candidates).
#[derive(Debug, Clone, PartialEq)]
pub struct PositionGrid {
    x_min: f64,
    x_max: f64,
    step: f64,
    points: usize,
}

impl PositionGrid {
    /// Requires at least as many grid points as PAs, and a grid step of at
    /// least d_min so distinct grid indices are automatically feasible.
    pub fn new(spec: &WaveguideSpec, points: usize) -> Result<Self, Error> {
        if points < 2 {
            return Err(Error::invalid("grid points", "need at least two"));
        }
        if points < spec.num_pas() {
            return Err(Error::invalid(
                "grid points",
                format!("{} points cannot host {} PAs", points, spec.num_pas()),
            ));
        }
        let step = (spec.x_max - spec.x_min) / (points as f64 - 1.0);
        if step < spec.d_min {
            return Err(Error::invalid(
                "grid points",
                format!("grid step {} below d_min {}", step, spec.d_min),
            ));
        }
        Ok(Self {
            x_min: spec.x_min,
            x_max: spec.x_max,
            step,
            points,
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Coordinate of grid index i, clamped so the last point is exactly x_max.
    pub fn coord(&self, i: usize) -> f64 {
        (self.x_min + i as f64 * self.step).min(self.x_max)
    }

    /// Repairs arbitrary positions onto distinct ascending grid points:
    /// round each to its nearest index, then resolve collisions with the
    /// same forward/backward passes as the continuous repair, on the index
    /// lattice.
    pub fn snap_positions(&self, x: &[f64]) -> Vec<f64> {
        let top = self.points as i64 - 1;
        let mut idx: Vec<i64> = x
            .iter()
            .map(|&v| (((v - self.x_min) / self.step).round() as i64).clamp(0, top))
            .collect();
        idx.sort_unstable();
        for i in 1..idx.len() {
            if idx[i] <= idx[i - 1] {
                idx[i] = idx[i - 1] + 1;
            }
        }
        if idx.last().copied().unwrap_or(0) > top {
            let n = idx.len();
            idx[n - 1] = top;
            for i in (0..n - 1).rev() {
                if idx[i] >= idx[i + 1] {
                    idx[i] = idx[i + 1] - 1;
                }
            }
        }
        idx.into_iter().map(|i| self.coord(i as usize)).collect()
    }
}

/// What the swarm does with the position block.
#[derive(Debug, Clone, PartialEq)]
pub enum PositionSearch {
    /// Positions pinned for the whole run (baselines); must be feasible.
    Fixed(Vec<f64>),
    /// Positions searched, repaired after every move; `snap` restricts the
    /// search to a discrete grid.
    Optimize { snap: Option<PositionGrid> },
}

/// Feasible set for the per-PA propagation constants.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaProtocol {
    /// All PAs share one fixed constant; the block is not searched.
    Fixed(f64),
    /// Each PA picks one of the spec's guided-mode constants.
    DiscreteSelection,
    /// Each PA tunes continuously within [lo, hi].
    ContinuousInterval { lo: f64, hi: f64 },
}

/// How the user-facing channel is assembled from the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Waveguide-fed PAs: LoS channels composed with the cascaded gain
    /// matrix; the effective channel has one column per guided mode.
    Waveguide,
    /// Conventional digital array: every antenna has its own RF chain and
    /// the LoS channels are used directly (no waveguide, no β).
    DirectAntenna,
}

/// Everything a fitness evaluation needs, bundled so particles can be
/// scored from worker threads without extra plumbing.
#[derive(Debug, Clone)]
pub struct SwarmProblem<'a> {
    pub spec: &'a WaveguideSpec,
    pub users: &'a UserLayout,
    pub noise: NoiseModel,
    pub p_max: f64,
    pub channel: ChannelKind,
    pub positions: PositionSearch,
    pub beta: BetaProtocol,
}

impl<'a> SwarmProblem<'a> {
    pub fn validate(&self) -> Result<(), Error> {
        if !self.p_max.is_finite() || self.p_max <= 0.0 {
            return Err(Error::invalid("p_max", "must be positive and finite"));
        }
        match &self.positions {
            PositionSearch::Fixed(x) => {
                let probe = PaConfiguration::new(x.clone(), vec![self.spec.mode_betas[0]; x.len()]);
                probe.validate_geometry(self.spec)?;
            }
            PositionSearch::Optimize { snap: Some(grid) } => {
                if grid.points() < self.spec.num_pas() {
                    return Err(Error::invalid("snap grid", "fewer points than PAs"));
                }
            }
            PositionSearch::Optimize { snap: None } => {}
        }
        match self.beta {
            BetaProtocol::Fixed(b) => {
                if !b.is_finite() || b <= 0.0 {
                    return Err(Error::invalid("beta", "fixed value must be positive"));
                }
            }
            BetaProtocol::DiscreteSelection => {
                if self.spec.num_modes() < 2 {
                    return Err(Error::invalid(
                        "beta",
                        "discrete selection needs at least two modes",
                    ));
                }
            }
            BetaProtocol::ContinuousInterval { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || lo > hi {
                    return Err(Error::invalid("beta", "need 0 < lo <= hi"));
                }
            }
        }
        if self.channel == ChannelKind::DirectAntenna
            && !matches!(self.beta, BetaProtocol::Fixed(_))
        {
            return Err(Error::invalid(
                "beta",
                "a direct-antenna channel has no propagation constants to tune",
            ));
        }
        Ok(())
    }

    fn num_pas(&self) -> usize {
        self.spec.num_pas()
    }

    fn num_users(&self) -> usize {
        self.users.num_users()
    }
}

/// A decision point in user-facing coordinates: resolved β values rather
/// than selector bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub positions: Vec<f64>,
    pub beta_pa: Vec<f64>,
    pub z_lambda: Vec<f64>,
    pub z_p: Vec<f64>,
}

/// Maps the two-mode binary selector onto propagation constants:
/// β_n = β_1 on a 0 bit, β_2 on a 1 bit. The binary encoding only covers
/// exactly two modes; larger mode sets use the integer selector instead.
pub fn map_selector_to_beta(bits: &[bool], mode_betas: &[f64]) -> Result<Vec<f64>, Error> {
    if mode_betas.len() != 2 {
        return Err(Error::invalid(
            "mode_betas",
            format!("binary selector covers exactly 2 modes, got {}", mode_betas.len()),
        ));
    }
    Ok(bits
        .iter()
        .map(|&b| if b { mode_betas[1] } else { mode_betas[0] })
        .collect())
}

/// Repairs tentative positions onto the feasible set: clamp into the box,
/// sort ascending, sweep forward raising each position to at least
/// d_min above its predecessor, cap the last at x_max, then sweep backward
/// lowering each to at least d_min below its successor.
///
/// For feasible geometry ((N−1)·d_min ≤ x_max − x_min, enforced at spec
/// construction) the result is sorted, inside the box, and spaced by d_min
/// up to the rounding of the sweep arithmetic; feasible inputs pass through
/// unchanged. The final max() against x_min only engages within rounding
/// error of a tight box and keeps the box postcondition exact.
pub fn project_positions(x_tentative: &[f64], spec: &WaveguideSpec) -> Vec<f64> {
    debug_assert!(x_tentative.iter().all(|v| v.is_finite()));
    let d = spec.d_min;
    let mut x: Vec<f64> = x_tentative
        .iter()
        .map(|&v| v.clamp(spec.x_min, spec.x_max))
        .collect();
    x.sort_by(f64::total_cmp);
    for i in 1..x.len() {
        let lo = x[i - 1] + d;
        if x[i] < lo {
            x[i] = lo;
        }
    }
    // The backward sweep is only needed when the forward sweep pushed the
    // last element past the wall; running it unconditionally tears exact
    // forward ladders by an ulp via (x + d) - d.
    let overshot = x.last().is_some_and(|&last| last > spec.x_max);
    if overshot {
        *x.last_mut().unwrap() = spec.x_max;
        for i in (0..x.len() - 1).rev() {
            let hi = x[i + 1] - d;
            if x[i] > hi {
                x[i] = hi.max(spec.x_min);
            }
        }
    }
    x
}

/// One inertia/cognitive/social velocity-position step on a continuous
/// block. Per element, in order, two draws r1 and r2 are taken from `rng`;
/// the velocity is clamped to ±v_clamp before moving the position. The
/// caller applies the block's feasibility map afterwards.
pub fn update_continuous_block(
    u: &mut [f64],
    v: &mut [f64],
    pbest: &[f64],
    gbest: &[f64],
    inertia: f64,
    cognitive: f64,
    social: f64,
    v_clamp: f64,
    rng: &mut impl Rng,
) {
    for i in 0..u.len() {
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let vel = inertia * v[i]
            + cognitive * r1 * (pbest[i] - u[i])
            + social * r2 * (gbest[i] - u[i]);
        v[i] = vel.clamp(-v_clamp, v_clamp);
        u[i] += v[i];
    }
}

/// One binary-PSO step: velocities evolve with bits read as 0/1 reals, then
/// each bit is resampled as 1 with probability sigmoid(velocity). Per
/// element, in order, three draws are taken: r1, r2, and the acceptance
/// uniform.
pub fn update_binary_block(
    b: &mut [bool],
    v: &mut [f64],
    pbest: &[bool],
    gbest: &[bool],
    inertia: f64,
    cognitive: f64,
    social: f64,
    v_clamp: f64,
    rng: &mut impl Rng,
) {
    for i in 0..b.len() {
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let bit = b[i] as u8 as f64;
        let vel = inertia * v[i]
            + cognitive * r1 * (pbest[i] as u8 as f64 - bit)
            + social * r2 * (gbest[i] as u8 as f64 - bit);
        v[i] = vel.clamp(-v_clamp, v_clamp);
        let accept: f64 = rng.random();
        b[i] = accept < sigmoid(v[i]);
    }
}

/// β block in search coordinates.
#[derive(Debug, Clone, PartialEq)]
enum BetaPoint {
    Fixed,
    Bits(Vec<bool>),
    /// Integer mode selector for M > 2, one mode index per PA.
    Selector(Vec<usize>),
    Continuous(Vec<f64>),
}

/// Internal search-space point: β kept in its encoding so best-point
/// attraction acts on the coordinates the update rules understand.
#[derive(Debug, Clone, PartialEq)]
struct Point {
    positions: Vec<f64>,
    beta: BetaPoint,
    z_lambda: Vec<f64>,
    z_p: Vec<f64>,
}

impl Point {
    fn resolve(&self, problem: &SwarmProblem) -> Candidate {
        let beta_pa = match (&self.beta, &problem.beta) {
            (BetaPoint::Fixed, BetaProtocol::Fixed(b)) => vec![*b; self.positions.len()],
            (BetaPoint::Bits(bits), _) => {
                map_selector_to_beta(bits, &problem.spec.mode_betas)
                    .expect("bits imply a two-mode spec")
            }
            (BetaPoint::Selector(sel), _) => {
                sel.iter().map(|&m| problem.spec.mode_betas[m]).collect()
            }
            (BetaPoint::Continuous(b), _) => b.clone(),
            (BetaPoint::Fixed, _) => unreachable!("fixed beta point under a searched protocol"),
        };
        Candidate {
            positions: self.positions.clone(),
            beta_pa,
            z_lambda: self.z_lambda.clone(),
            z_p: self.z_p.clone(),
        }
    }
}

/// β-block velocities, matching the encoding of [`BetaPoint`].
#[derive(Debug, Clone)]
enum BetaVelocity {
    None,
    /// One velocity per PA (bits and continuous β).
    Element(Vec<f64>),
    /// One velocity per (PA, mode) pair, flattened PA-major.
    PerMode(Vec<f64>),
}

struct Particle {
    point: Point,
    v_pos: Vec<f64>,
    v_beta: BetaVelocity,
    v_zl: Vec<f64>,
    v_zp: Vec<f64>,
    pbest: Point,
    pbest_fitness: f64,
    rng: ChaCha8Rng,
    failed_evaluations: u64,
}

/// Builds the effective channel and the normalized KPBF precoder for one
/// candidate. Shared by fitness evaluation and final reporting.
fn candidate_pipeline(
    problem: &SwarmProblem,
    candidate: &Candidate,
) -> Result<(DMatrix<C64>, Precoder), Error> {
    let config = PaConfiguration::new(candidate.positions.clone(), candidate.beta_pa.clone());
    let k = problem.num_users();
    let h_eff = match problem.channel {
        ChannelKind::Waveguide => {
            let gain = cascaded_gain_matrix(problem.spec, &config)?;
            let channels = problem
                .users
                .iter()
                .map(|&u| los_channel(problem.spec, &config, u))
                .collect::<Result<Vec<_>, _>>()?;
            effective_channel(gain, channels)?.h_eff
        }
        ChannelKind::DirectAntenna => {
            let n = problem.num_pas();
            let mut h_eff = DMatrix::<C64>::zeros(k, n);
            for (row, &u) in problem.users.iter().enumerate() {
                let h = los_channel(problem.spec, &config, u)?;
                h_eff.row_mut(row).copy_from(&h.adjoint());
            }
            h_eff
        }
    };
    let lambda = exp_reparam(&candidate.z_lambda);
    let p_rel = softmax(&candidate.z_p);
    let w_tilde = kpbf_unnormalized(&h_eff, &lambda, &p_rel, problem.noise.watts())?;
    let precoder = normalize_power(&w_tilde, problem.p_max)?;
    Ok((h_eff, precoder))
}

/// Sum-rate fitness of one candidate. Numerical failures anywhere in the
/// pipeline score 0 and raise the `failed` flag so a search loop can keep
/// moving; they never panic or abort the run.
pub fn evaluate_fitness(problem: &SwarmProblem, candidate: &Candidate) -> (f64, bool) {
    match candidate_pipeline(problem, candidate) {
        Ok((h_eff, precoder)) => {
            let rate = sum_rate(&h_eff, &precoder.weights, problem.noise.watts());
            if rate.is_finite() {
                (rate, false)
            } else {
                (0.0, true)
            }
        }
        Err(_) => (0.0, true),
    }
}

impl Particle {
    /// Draw order at initialization: positions (one uniform per PA, then
    /// repaired), β block, z_λ (uniform in ±2), then one z_p velocity per
    /// user. z_p itself starts at the uniform power split for every
    /// particle, which makes it a swarm-wide consensus point; a zero
    /// initial velocity would freeze the block forever (inertia, cognitive
    /// and social terms all vanish at consensus), so z_p alone gets a
    /// random velocity kick. All other velocities start at zero.
    fn init(problem: &SwarmProblem, hyper: &PsoHyperparams, seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let n = problem.num_pas();
        let k = problem.num_users();
        let spec = problem.spec;

        let positions = match &problem.positions {
            PositionSearch::Fixed(x) => x.clone(),
            PositionSearch::Optimize { snap } => {
                let draws: Vec<f64> = (0..n)
                    .map(|_| spec.x_min + rng.random::<f64>() * (spec.x_max - spec.x_min))
                    .collect();
                match snap {
                    Some(grid) => grid.snap_positions(&draws),
                    None => project_positions(&draws, spec),
                }
            }
        };

        let (beta, v_beta) = match &problem.beta {
            BetaProtocol::Fixed(_) => (BetaPoint::Fixed, BetaVelocity::None),
            BetaProtocol::DiscreteSelection => {
                let m = spec.num_modes();
                if m == 2 {
                    let bits: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
                    (BetaPoint::Bits(bits), BetaVelocity::Element(vec![0.0; n]))
                } else {
                    let sel: Vec<usize> = (0..n)
                        .map(|_| ((rng.random::<f64>() * m as f64) as usize).min(m - 1))
                        .collect();
                    (BetaPoint::Selector(sel), BetaVelocity::PerMode(vec![0.0; n * m]))
                }
            }
            BetaProtocol::ContinuousInterval { lo, hi } => {
                let b: Vec<f64> = (0..n)
                    .map(|_| lo + rng.random::<f64>() * (hi - lo))
                    .collect();
                (BetaPoint::Continuous(b), BetaVelocity::Element(vec![0.0; n]))
            }
        };

        let z_lambda: Vec<f64> = (0..k)
            .map(|_| -Z_INIT_HALF_WIDTH + rng.random::<f64>() * 2.0 * Z_INIT_HALF_WIDTH)
            .collect();
        let z_p = vec![0.0; k];
        let clamp = hyper.z_velocity_clamp;
        let v_zp: Vec<f64> = (0..k)
            .map(|_| -clamp + rng.random::<f64>() * 2.0 * clamp)
            .collect();

        let point = Point {
            positions,
            beta,
            z_lambda,
            z_p,
        };
        Particle {
            pbest: point.clone(),
            point,
            v_pos: vec![0.0; n],
            v_beta,
            v_zl: vec![0.0; k],
            v_zp,
            pbest_fitness: f64::NEG_INFINITY,
            rng,
            failed_evaluations: 0,
        }
    }

    fn score(&mut self, problem: &SwarmProblem) -> f64 {
        let candidate = self.point.resolve(problem);
        let (fitness, failed) = evaluate_fitness(problem, &candidate);
        if failed {
            self.failed_evaluations += 1;
        }
        fitness
    }

    /// One full particle move against the iteration-start global best:
    /// block updates in the documented draw order, feasibility maps, then
    /// re-evaluation and personal-best bookkeeping (strict improvement).
    fn advance(&mut self, gbest: &Point, problem: &SwarmProblem, hp: &PsoHyperparams) {
        let spec = problem.spec;

        if let PositionSearch::Optimize { snap } = &problem.positions {
            let v_clamp = hp.position_velocity_frac * (spec.x_max - spec.x_min);
            update_continuous_block(
                &mut self.point.positions,
                &mut self.v_pos,
                &self.pbest.positions,
                &gbest.positions,
                hp.inertia,
                hp.cognitive,
                hp.social,
                v_clamp,
                &mut self.rng,
            );
            self.point.positions = match snap {
                Some(grid) => grid.snap_positions(&self.point.positions),
                None => project_positions(&self.point.positions, spec),
            };
        }

        match (&mut self.point.beta, &mut self.v_beta) {
            (BetaPoint::Fixed, _) => {}
            (BetaPoint::Bits(bits), BetaVelocity::Element(v)) => {
                let (BetaPoint::Bits(pb), BetaPoint::Bits(gb)) = (&self.pbest.beta, &gbest.beta)
                else {
                    unreachable!("best points share the particle's encoding")
                };
                update_binary_block(
                    bits,
                    v,
                    pb,
                    gb,
                    hp.inertia,
                    hp.cognitive,
                    hp.social,
                    hp.binary_velocity_clamp,
                    &mut self.rng,
                );
            }
            (BetaPoint::Selector(sel), BetaVelocity::PerMode(v)) => {
                let (BetaPoint::Selector(pb), BetaPoint::Selector(gb)) =
                    (&self.pbest.beta, &gbest.beta)
                else {
                    unreachable!("best points share the particle's encoding")
                };
                let m = spec.num_modes();
                // Per-mode binary velocities against the one-hot encodings
                // of the best selectors; the sampled score sigmoid(v)·u
                // picks the winning mode per PA.
                for n in 0..sel.len() {
                    let mut best_mode = 0usize;
                    let mut best_score = f64::NEG_INFINITY;
                    for mode in 0..m {
                        let i = n * m + mode;
                        let r1: f64 = self.rng.random();
                        let r2: f64 = self.rng.random();
                        let cur = (sel[n] == mode) as u8 as f64;
                        let vel = hp.inertia * v[i]
                            + hp.cognitive * r1 * ((pb[n] == mode) as u8 as f64 - cur)
                            + hp.social * r2 * ((gb[n] == mode) as u8 as f64 - cur);
                        v[i] = vel.clamp(-hp.binary_velocity_clamp, hp.binary_velocity_clamp);
                        let u: f64 = self.rng.random();
                        let score = sigmoid(v[i]) * u;
                        if score > best_score {
                            best_score = score;
                            best_mode = mode;
                        }
                    }
                    sel[n] = best_mode;
                }
            }
            (BetaPoint::Continuous(b), BetaVelocity::Element(v)) => {
                let (BetaPoint::Continuous(pb), BetaPoint::Continuous(gb)) =
                    (&self.pbest.beta, &gbest.beta)
                else {
                    unreachable!("best points share the particle's encoding")
                };
                let BetaProtocol::ContinuousInterval { lo, hi } = problem.beta else {
                    unreachable!("continuous beta point under a non-interval protocol")
                };
                let v_clamp = (hp.beta_velocity_frac * (hi - lo)).max(f64::MIN_POSITIVE);
                update_continuous_block(
                    b,
                    v,
                    pb,
                    gb,
                    hp.inertia,
                    hp.cognitive,
                    hp.social,
                    v_clamp,
                    &mut self.rng,
                );
                for bi in b.iter_mut() {
                    *bi = bi.clamp(lo, hi);
                }
            }
            _ => unreachable!("beta point and velocity encodings always match"),
        }

        update_continuous_block(
            &mut self.point.z_lambda,
            &mut self.v_zl,
            &self.pbest.z_lambda,
            &gbest.z_lambda,
            hp.inertia,
            hp.cognitive,
            hp.social,
            hp.z_velocity_clamp,
            &mut self.rng,
        );
        for z in self.point.z_lambda.iter_mut() {
            *z = z.clamp(-hp.z_bound, hp.z_bound);
        }
        update_continuous_block(
            &mut self.point.z_p,
            &mut self.v_zp,
            &self.pbest.z_p,
            &gbest.z_p,
            hp.inertia,
            hp.cognitive,
            hp.social,
            hp.z_velocity_clamp,
            &mut self.rng,
        );
        for z in self.point.z_p.iter_mut() {
            *z = z.clamp(-hp.z_bound, hp.z_bound);
        }

        let fitness = self.score(problem);
        if fitness > self.pbest_fitness {
            self.pbest_fitness = fitness;
            self.pbest = self.point.clone();
        }
    }
}

/// Full run summary: the best candidate found, its beamforming quantities,
/// and the per-iteration global-best trace.
#[derive(Debug, Clone)]
pub struct PsoOutcome {
    pub positions: Vec<f64>,
    pub beta_pa: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p_rel: Vec<f64>,
    pub fitness: f64,
    /// gbest fitness after initialization and after each iteration;
    /// length = iterations + 1, nondecreasing.
    pub trace: Vec<f64>,
    pub failed_evaluations: u64,
    pub precoder: Precoder,
}

/// Swarm population plus global-best bookkeeping. `step` advances one
/// iteration; particles move concurrently, the global best is reconciled
/// sequentially afterwards.
pub struct SwarmState<'a> {
    problem: &'a SwarmProblem<'a>,
    hyper: PsoHyperparams,
    particles: Vec<Particle>,
    gbest: Point,
    gbest_fitness: f64,
    iteration: usize,
    trace: Vec<f64>,
}

impl<'a> SwarmState<'a> {
    /// Seeds and scores the initial population. Particle i draws from
    /// substream i of the seed; the global best is the lowest-index
    /// particle with the maximal initial fitness.
    pub fn new(
        problem: &'a SwarmProblem<'a>,
        hyper: PsoHyperparams,
        seed: u64,
    ) -> Result<Self, Error> {
        problem.validate()?;
        hyper.validate()?;
        let mut particles: Vec<Particle> = (0..hyper.num_particles)
            .map(|i| Particle::init(problem, &hyper, seed, i))
            .collect();
        particles.par_iter_mut().for_each(|p| {
            let fitness = p.score(problem);
            p.pbest_fitness = fitness;
            p.pbest = p.point.clone();
        });
        let mut best_idx = 0;
        for (i, p) in particles.iter().enumerate() {
            if p.pbest_fitness > particles[best_idx].pbest_fitness {
                best_idx = i;
            }
        }
        let gbest = particles[best_idx].pbest.clone();
        let gbest_fitness = particles[best_idx].pbest_fitness;
        Ok(Self {
            problem,
            hyper,
            particles,
            gbest,
            gbest_fitness,
            iteration: 0,
            trace: vec![gbest_fitness],
        })
    }

    /// One synchronous iteration: all particles move against the same
    /// iteration-start global best, then the global best absorbs strictly
    /// better personal bests in particle-index order.
    pub fn step(&mut self) {
        let snapshot = self.gbest.clone();
        let problem = self.problem;
        let hyper = &self.hyper;
        self.particles
            .par_iter_mut()
            .for_each(|p| p.advance(&snapshot, problem, hyper));
        for p in &self.particles {
            if p.pbest_fitness > self.gbest_fitness {
                self.gbest_fitness = p.pbest_fitness;
                self.gbest = p.pbest.clone();
            }
        }
        self.iteration += 1;
        self.trace.push(self.gbest_fitness);
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn gbest_fitness(&self) -> f64 {
        self.gbest_fitness
    }

    pub fn gbest_candidate(&self) -> Candidate {
        self.gbest.resolve(self.problem)
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn pbest_fitnesses(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.pbest_fitness).collect()
    }

    /// Checks every particle against its feasible set: repaired positions
    /// (and grid membership when snapping), β inside the protocol set, and
    /// z within the clamp box.
    pub fn check_feasibility(&self) -> Result<(), Error> {
        for p in &self.particles {
            let candidate = p.point.resolve(self.problem);
            let config =
                PaConfiguration::new(candidate.positions.clone(), candidate.beta_pa.clone());
            config.validate_geometry(self.problem.spec)?;
            if let PositionSearch::Optimize { snap: Some(grid) } = &self.problem.positions {
                for &x in &candidate.positions {
                    let i = ((x - grid.x_min) / grid.step).round() as usize;
                    if (grid.coord(i.min(grid.points - 1)) - x).abs() > 1e-9 {
                        return Err(Error::invalid("positions", format!("{} off-grid", x)));
                    }
                }
            }
            match self.problem.beta {
                BetaProtocol::Fixed(b) => {
                    if candidate.beta_pa.iter().any(|&v| v != b) {
                        return Err(Error::invalid("beta_pa", "moved off the fixed value"));
                    }
                }
                BetaProtocol::DiscreteSelection => {
                    if candidate
                        .beta_pa
                        .iter()
                        .any(|v| !self.problem.spec.mode_betas.contains(v))
                    {
                        return Err(Error::invalid("beta_pa", "outside the mode set"));
                    }
                }
                BetaProtocol::ContinuousInterval { lo, hi } => {
                    if candidate.beta_pa.iter().any(|&v| v < lo || v > hi) {
                        return Err(Error::invalid("beta_pa", "outside the interval"));
                    }
                }
            }
            if candidate
                .z_lambda
                .iter()
                .chain(candidate.z_p.iter())
                .any(|z| z.abs() > self.hyper.z_bound)
            {
                return Err(Error::invalid("z", "outside the clamp box"));
            }
        }
        Ok(())
    }

    /// Consumes the state into the final summary, recomputing the best
    /// candidate's precoder. A best candidate that cannot be scored (never
    /// the case unless every evaluation failed) reports the zero precoder.
    pub fn into_outcome(self) -> PsoOutcome {
        let candidate = self.gbest.resolve(self.problem);
        let precoder = candidate_pipeline(self.problem, &candidate)
            .map(|(_, p)| p)
            .unwrap_or_else(|_| Precoder {
                weights: DMatrix::zeros(0, 0),
                degenerate: true,
            });
        let lambda = exp_reparam(&candidate.z_lambda);
        let p_rel = softmax(&candidate.z_p);
        PsoOutcome {
            positions: candidate.positions,
            beta_pa: candidate.beta_pa,
            lambda: lambda.iter().cloned().collect(),
            p_rel: p_rel.iter().cloned().collect(),
            fitness: self.gbest_fitness,
            trace: self.trace,
            failed_evaluations: self.particles.iter().map(|p| p.failed_evaluations).sum(),
            precoder,
        }
    }
}

/// Runs the full loop: initialize, iterate `hyper.iterations` times, return
/// the summary. With zero iterations this reports the best of the seeded
/// initial population.
pub fn run_pso_kpbf(
    problem: &SwarmProblem,
    hyper: &PsoHyperparams,
    seed: u64,
) -> Result<PsoOutcome, Error> {
    let mut state = SwarmState::new(problem, hyper.clone(), seed)?;
    for _ in 0..hyper.iterations {
        state.step();
    }
    Ok(state.into_outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::DMatrix;

    const BETA_1: f64 = 1009.2378;
    const BETA_2: f64 = 645.7996;

    fn spec(n: usize) -> WaveguideSpec {
        WaveguideSpec::new(
            vec![BETA_1, BETA_2],
            DMatrix::from_element(n, 2, 150.0),
            0.006,
            0.0,
            20.0,
            0.005,
            3.0,
            28e9,
        )
        .unwrap()
    }

    fn problem<'a>(
        spec: &'a WaveguideSpec,
        users: &'a UserLayout,
        beta: BetaProtocol,
    ) -> SwarmProblem<'a> {
        SwarmProblem {
            spec,
            users,
            noise: NoiseModel::new(1e-12).unwrap(),
            p_max: 0.31622776601683794,
            channel: ChannelKind::Waveguide,
            positions: PositionSearch::Optimize { snap: None },
            beta,
        }
    }

    #[test]
    fn projection_leaves_feasible_input_unchanged() {
        let spec = spec(4);
        let x = vec![1.0, 3.0, 7.5, 19.0];
        assert_eq!(project_positions(&x, &spec), x);
    }

    #[test]
    fn projection_spreads_a_pile_at_x_min() {
        let spec = spec(4);
        let out = project_positions(&[0.0, 0.0, 0.0, 0.0], &spec);
        let mut expected = vec![0.0];
        for _ in 1..4 {
            expected.push(expected.last().unwrap() + spec.d_min);
        }
        assert_eq!(out, expected);
    }

    #[test]
    fn projection_spreads_a_pile_at_x_max() {
        let spec = spec(4);
        let out = project_positions(&[20.0, 20.0, 20.0, 20.0], &spec);
        let mut expected = vec![20.0];
        for _ in 1..4 {
            expected.push(expected.last().unwrap() - spec.d_min);
        }
        expected.reverse();
        assert_eq!(out, expected);
    }

    #[test]
    fn projection_sorts_and_boxes() {
        let spec = spec(3);
        let out = project_positions(&[25.0, -3.0, 4.0], &spec);
        assert!(out.windows(2).all(|w| w[1] - w[0] >= spec.d_min * (1.0 - 1e-12)));
        assert!(out.iter().all(|&x| (0.0..=20.0).contains(&x)));
        assert_eq!(out[1], 4.0);
    }

    #[test]
    fn continuous_update_is_stationary_at_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut u = vec![1.5, -0.25];
        let mut v = vec![0.0, 0.0];
        let best = u.clone();
        update_continuous_block(&mut u, &mut v, &best, &best, 0.7, 1.5, 1.5, 10.0, &mut rng);
        assert_eq!(u, best);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn continuous_update_matches_scalar_recomputation() {
        // Replays the documented draw order (r1 then r2 per element) on a
        // cloned RNG and re-derives the update scalar by scalar.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut oracle_rng = rng.clone();
        let mut u = vec![0.4, -1.2, 3.0];
        let mut v = vec![0.1, -0.2, 0.05];
        let u0 = u.clone();
        let v0 = v.clone();
        let pbest = vec![0.9, -1.0, 2.0];
        let gbest = vec![0.0, 0.5, 3.5];
        let (w, c1, c2, clamp) = (0.7, 1.5, 1.5, 0.3);
        update_continuous_block(&mut u, &mut v, &pbest, &gbest, w, c1, c2, clamp, &mut rng);
        for i in 0..3 {
            let r1: f64 = oracle_rng.random();
            let r2: f64 = oracle_rng.random();
            let vel = (w * v0[i] + c1 * r1 * (pbest[i] - u0[i]) + c2 * r2 * (gbest[i] - u0[i]))
                .clamp(-clamp, clamp);
            assert_relative_eq!(v[i], vel, max_relative = 1e-15);
            assert_relative_eq!(u[i], u0[i] + vel, max_relative = 1e-15);
        }
    }

    #[test]
    fn binary_update_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut oracle_rng = rng.clone();
        let mut b = vec![true, false, false, true];
        let mut v = vec![0.5, -0.5, 0.0, 2.0];
        let b0 = b.clone();
        let v0 = v.clone();
        let pbest = vec![true, true, false, false];
        let gbest = vec![false, true, true, false];
        let (w, c1, c2, clamp) = (0.7, 1.5, 1.5, 6.0);
        update_binary_block(&mut b, &mut v, &pbest, &gbest, w, c1, c2, clamp, &mut rng);
        for i in 0..4 {
            let r1: f64 = oracle_rng.random();
            let r2: f64 = oracle_rng.random();
            let bit = b0[i] as u8 as f64;
            let vel = (w * v0[i]
                + c1 * r1 * (pbest[i] as u8 as f64 - bit)
                + c2 * r2 * (gbest[i] as u8 as f64 - bit))
                .clamp(-clamp, clamp);
            let accept: f64 = oracle_rng.random();
            assert_relative_eq!(v[i], vel, max_relative = 1e-15);
            assert_eq!(b[i], accept < sigmoid(vel));
        }
    }

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(6.0), 0.9975273768433653, max_relative = 1e-15);
        assert_relative_eq!(sigmoid(-6.0), 1.0 - 0.9975273768433653, max_relative = 1e-12);
    }

    #[test]
    fn zero_velocity_bits_resample_fairly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ones = 0u32;
        let n = 20_000;
        for _ in 0..n {
            let mut b = vec![false];
            let mut v = vec![0.0];
            update_binary_block(
                &mut b,
                &mut v,
                &[false],
                &[false],
                0.7,
                0.0,
                0.0,
                6.0,
                &mut rng,
            );
            ones += b[0] as u32;
        }
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {}", freq);
    }

    #[test]
    fn selector_mapping_covers_both_modes() {
        let betas = [BETA_1, BETA_2];
        assert_eq!(
            map_selector_to_beta(&[false, false], &betas).unwrap(),
            vec![BETA_1, BETA_1]
        );
        assert_eq!(
            map_selector_to_beta(&[true, true], &betas).unwrap(),
            vec![BETA_2, BETA_2]
        );
        assert_eq!(
            map_selector_to_beta(&[false, true, false], &betas).unwrap(),
            vec![BETA_1, BETA_2, BETA_1]
        );
        assert!(map_selector_to_beta(&[true], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zero_coupling_scores_zero_fitness() {
        let spec = WaveguideSpec::new(
            vec![BETA_1, BETA_2],
            DMatrix::zeros(2, 2),
            0.006,
            0.0,
            20.0,
            0.005,
            3.0,
            28e9,
        )
        .unwrap();
        let users = UserLayout::new(vec![(5.0, 1.0)]).unwrap();
        let p = problem(&spec, &users, BetaProtocol::Fixed(BETA_1));
        let candidate = Candidate {
            positions: vec![4.0, 9.0],
            beta_pa: vec![BETA_1, BETA_1],
            z_lambda: vec![0.0],
            z_p: vec![0.0],
        };
        let (fitness, failed) = evaluate_fitness(&p, &candidate);
        assert_eq!(fitness, 0.0);
        assert!(!failed, "an all-zero channel is a valid zero-rate point");
    }

    #[test]
    fn single_user_fitness_hits_the_closed_form() {
        let spec = spec(3);
        let users = UserLayout::new(vec![(8.0, 2.0)]).unwrap();
        let p = problem(&spec, &users, BetaProtocol::Fixed(BETA_1));
        let candidate = Candidate {
            positions: vec![2.0, 8.0, 14.0],
            beta_pa: vec![BETA_1; 3],
            z_lambda: vec![1.3],
            z_p: vec![0.0],
        };
        let (fitness, failed) = evaluate_fitness(&p, &candidate);
        assert!(!failed);
        let config = PaConfiguration::new(candidate.positions.clone(), candidate.beta_pa.clone());
        let gain = cascaded_gain_matrix(&spec, &config).unwrap();
        let h = los_channel(&spec, &config, [8.0, 2.0, 0.0]).unwrap();
        let eff = effective_channel(gain, vec![h]).unwrap();
        let expected =
            (1.0 + p.p_max * eff.h_eff.row(0).norm_squared() / p.noise.watts()).log2();
        assert_relative_eq!(fitness, expected, max_relative = 1e-10);
    }

    #[test]
    fn fitness_equals_manual_module_composition() {
        let spec = spec(3);
        let users = UserLayout::new(vec![(3.0, -1.0), (12.0, 4.0)]).unwrap();
        let p = problem(&spec, &users, BetaProtocol::Fixed(827.5187));
        let candidate = Candidate {
            positions: vec![1.0, 6.5, 13.0],
            beta_pa: vec![827.5187; 3],
            z_lambda: vec![0.4, -0.9],
            z_p: vec![0.3, -0.3],
        };
        let (fitness, failed) = evaluate_fitness(&p, &candidate);
        assert!(!failed);
        let config = PaConfiguration::new(candidate.positions.clone(), candidate.beta_pa.clone());
        let gain = cascaded_gain_matrix(&spec, &config).unwrap();
        let channels: Vec<_> = users
            .iter()
            .map(|&u| los_channel(&spec, &config, u).unwrap())
            .collect();
        let eff = effective_channel(gain, channels).unwrap();
        let w_tilde = kpbf_unnormalized(
            &eff.h_eff,
            &exp_reparam(&candidate.z_lambda),
            &softmax(&candidate.z_p),
            p.noise.watts(),
        )
        .unwrap();
        let w = normalize_power(&w_tilde, p.p_max).unwrap();
        let expected = sum_rate(&eff.h_eff, &w.weights, p.noise.watts());
        assert_relative_eq!(fitness, expected, max_relative = 1e-12);
    }

    #[test]
    fn zero_iterations_reports_the_initial_population_best() {
        let spec = spec(2);
        let users = UserLayout::new(vec![(5.0, 1.0), (15.0, -2.0)]).unwrap();
        let p = problem(&spec, &users, BetaProtocol::DiscreteSelection);
        let hyper = PsoHyperparams {
            num_particles: 8,
            iterations: 0,
            ..PsoHyperparams::default()
        };
        let outcome = run_pso_kpbf(&p, &hyper, 5).unwrap();
        assert_eq!(outcome.trace.len(), 1);
        assert_eq!(outcome.trace[0], outcome.fitness);
        // The reported best must re-evaluate to its reported fitness.
        let candidate = Candidate {
            positions: outcome.positions.clone(),
            beta_pa: outcome.beta_pa.clone(),
            z_lambda: outcome.lambda.iter().map(|l| l.ln()).collect(),
            z_p: vec![0.0; 2],
        };
        let (fitness, _) = evaluate_fitness(&p, &candidate);
        assert_relative_eq!(fitness, outcome.fitness, max_relative = 1e-9);
    }

    #[test]
    fn frozen_swarm_keeps_its_initial_best() {
        // One particle, no inertia, no attraction: nothing can move except
        // through the feasibility maps, which are stable on feasible points
        // up to rounding.
        let spec = spec(2);
        let users = UserLayout::new(vec![(5.0, 1.0)]).unwrap();
        let p = problem(
            &spec,
            &users,
            BetaProtocol::ContinuousInterval {
                lo: 0.9 * BETA_2,
                hi: 1.1 * BETA_1,
            },
        );
        let hyper = PsoHyperparams {
            num_particles: 1,
            iterations: 12,
            inertia: 0.0,
            cognitive: 0.0,
            social: 0.0,
            ..PsoHyperparams::default()
        };
        let outcome = run_pso_kpbf(&p, &hyper, 17).unwrap();
        for &f in &outcome.trace {
            assert_relative_eq!(f, outcome.trace[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn equal_seeds_give_identical_runs() {
        let spec = spec(3);
        let users = UserLayout::new(vec![(4.0, 0.5), (16.0, -3.0)]).unwrap();
        let p = problem(&spec, &users, BetaProtocol::DiscreteSelection);
        let hyper = PsoHyperparams {
            num_particles: 6,
            iterations: 15,
            ..PsoHyperparams::default()
        };
        let a = run_pso_kpbf(&p, &hyper, 123).unwrap();
        let b = run_pso_kpbf(&p, &hyper, 123).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.beta_pa, b.beta_pa);
        assert_eq!(a.fitness, b.fitness);
    }

    #[test]
    fn snapped_positions_stay_on_the_grid() {
        let spec = spec(2);
        let grid = PositionGrid::new(&spec, 25).unwrap();
        let snapped = grid.snap_positions(&[3.33, 3.29]);
        assert_eq!(snapped.len(), 2);
        assert!(snapped[1] > snapped[0]);
        for &x in &snapped {
            let i = ((x - 0.0) / grid.step).round() as usize;
            assert_abs_diff_eq!(grid.coord(i), x, epsilon = 1e-12);
        }
        // Pileups at the top of the grid are pushed back down.
        let snapped = grid.snap_positions(&[20.0, 20.0, 19.9]);
        assert_eq!(snapped, vec![grid.coord(22), grid.coord(23), grid.coord(24)]);
    }

    #[test]
    fn grid_rejects_impossible_resolutions() {
        let spec = spec(3);
        assert!(PositionGrid::new(&spec, 2).is_err()); // fewer points than PAs
        let tight = WaveguideSpec::new(
            vec![BETA_1, BETA_2],
            DMatrix::from_element(2, 2, 150.0),
            0.006,
            0.0,
            1.0,
            0.3,
            3.0,
            28e9,
        )
        .unwrap();
        // 25 points over 1 m is a 0.04166 m step, below d_min = 0.3.
        assert!(PositionGrid::new(&tight, 25).is_err());
    }

    #[test]
    fn derive_seed_separates_salts() {
        assert_eq!(derive_seed(7, 0), derive_seed(7, 0));
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn direct_antenna_rejects_beta_search() {
        let spec = spec(2);
        let users = UserLayout::new(vec![(5.0, 1.0)]).unwrap();
        let mut p = problem(&spec, &users, BetaProtocol::DiscreteSelection);
        p.channel = ChannelKind::DirectAntenna;
        assert!(p.validate().is_err());
        p.beta = BetaProtocol::Fixed(BETA_1);
        assert!(p.validate().is_ok());
    }
}
