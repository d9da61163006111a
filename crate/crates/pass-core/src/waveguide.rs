//! Coupled-mode waveguide physics.
//!
//! A pinching antenna (PA) pressed against the waveguide exchanges power
//! with each guided mode. The per-PA/per-mode coupling coefficient follows
//! from coupled-mode theory over the PA contact length; the cascaded gain
//! matrix then tracks how upstream PAs deplete the guided power that
//! reaches downstream ones.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::C64;

/// Static waveguide and deployment geometry: everything that stays fixed
/// while the optimizer moves PA positions and propagation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideSpec {
    /// Propagation constants β_m of the M guided modes, rad/m. Distinct, positive.
    pub mode_betas: Vec<f64>,
    /// Overlap-integral coupling strengths κ_{n,m} ≥ 0, rad/m, one row per PA.
    pub kappa: DMatrix<f64>,
    /// PA contact length L along the waveguide, m.
    pub pa_length: f64,
    /// Placement interval for PA positions, m.
    pub x_min: f64,
    pub x_max: f64,
    /// Minimum spacing between adjacent PAs, m.
    pub d_min: f64,
    /// Height of the waveguide (and thus every PA) above the user plane, m.
    pub pa_height: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
}

impl WaveguideSpec {
    /// Validates every field against its domain and cross-field feasibility.
    ///
    /// The placement check `(N-1)·d_min ≤ x_max − x_min` is enforced here so
    /// position repair can assume a feasible box at every later call.
    pub fn new(
        mode_betas: Vec<f64>,
        kappa: DMatrix<f64>,
        pa_length: f64,
        x_min: f64,
        x_max: f64,
        d_min: f64,
        pa_height: f64,
        carrier_freq: f64,
    ) -> Result<Self, Error> {
        if mode_betas.is_empty() {
            return Err(Error::invalid("mode_betas", "at least one mode required"));
        }
        for (m, &b) in mode_betas.iter().enumerate() {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::invalid(
                    "mode_betas",
                    format!("beta_{} = {} must be positive and finite", m + 1, b),
                ));
            }
        }
        for i in 0..mode_betas.len() {
            for j in i + 1..mode_betas.len() {
                if mode_betas[i] == mode_betas[j] {
                    return Err(Error::invalid(
                        "mode_betas",
                        format!("modes {} and {} share beta = {}", i + 1, j + 1, mode_betas[i]),
                    ));
                }
            }
        }
        if kappa.ncols() != mode_betas.len() {
            return Err(Error::DimensionMismatch {
                context: "WaveguideSpec::new",
                expected: format!("kappa with {} columns", mode_betas.len()),
                actual: format!("{} columns", kappa.ncols()),
            });
        }
        if kappa.nrows() == 0 {
            return Err(Error::invalid("kappa", "at least one PA row required"));
        }
        if kappa.iter().any(|&k| !k.is_finite() || k < 0.0) {
            return Err(Error::invalid("kappa", "entries must be finite and >= 0"));
        }
        if !pa_length.is_finite() || pa_length <= 0.0 {
            return Err(Error::invalid("pa_length", "must be positive"));
        }
        if !x_min.is_finite() || !x_max.is_finite() || x_min >= x_max {
            return Err(Error::invalid("x_min/x_max", "need x_min < x_max, both finite"));
        }
        if !d_min.is_finite() || d_min <= 0.0 {
            return Err(Error::invalid("d_min", "must be positive"));
        }
        let n = kappa.nrows();
        if (n as f64 - 1.0) * d_min > x_max - x_min {
            return Err(Error::invalid(
                "d_min",
                format!(
                    "(N-1)*d_min = {} exceeds placement span {} for N = {}",
                    (n as f64 - 1.0) * d_min,
                    x_max - x_min,
                    n
                ),
            ));
        }
        if !pa_height.is_finite() || pa_height <= 0.0 {
            return Err(Error::invalid("pa_height", "must be positive"));
        }
        if !carrier_freq.is_finite() || carrier_freq <= 0.0 {
            return Err(Error::invalid("carrier_freq", "must be positive"));
        }
        Ok(Self {
            mode_betas,
            kappa,
            pa_length,
            x_min,
            x_max,
            d_min,
            pa_height,
            carrier_freq,
        })
    }

    /// Number of PAs (rows of the coupling matrix).
    pub fn num_pas(&self) -> usize {
        self.kappa.nrows()
    }

    /// Number of guided modes.
    pub fn num_modes(&self) -> usize {
        self.mode_betas.len()
    }

    /// Carrier wavelength λ = c/f, m.
    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_freq
    }
}

/// The per-antenna decision variables: positions along the waveguide and
/// per-PA propagation constants β^PA.
///
/// Whether each β^PA must come from the discrete mode set or a continuous
/// interval is a protocol choice; this type only carries the values.
#[derive(Debug, Clone, PartialEq)]
pub struct PaConfiguration {
    pub positions: Vec<f64>,
    pub beta_pa: Vec<f64>,
}

impl PaConfiguration {
    pub fn new(positions: Vec<f64>, beta_pa: Vec<f64>) -> Self {
        Self { positions, beta_pa }
    }

    /// Checks positions against the spec's box and spacing constraints:
    /// sorted ascending, inside [x_min, x_max], adjacent gaps >= d_min.
    ///
    /// The spacing comparison carries a 1e-12 relative allowance: the
    /// position repair enforces gaps with sequential +/- d_min arithmetic,
    /// which can land one rounding step short of the exact bound.
    pub fn validate_geometry(&self, spec: &WaveguideSpec) -> Result<(), Error> {
        if self.positions.len() != spec.num_pas() {
            return Err(Error::DimensionMismatch {
                context: "PaConfiguration::validate_geometry",
                expected: format!("{} positions", spec.num_pas()),
                actual: format!("{}", self.positions.len()),
            });
        }
        for (n, &x) in self.positions.iter().enumerate() {
            if !x.is_finite() || x < spec.x_min || x > spec.x_max {
                return Err(Error::invalid(
                    "positions",
                    format!("x_{} = {} outside [{}, {}]", n + 1, x, spec.x_min, spec.x_max),
                ));
            }
        }
        for w in self.positions.windows(2) {
            if w[1] - w[0] < spec.d_min * (1.0 - 1e-12) {
                return Err(Error::invalid(
                    "positions",
                    format!("gap {} below d_min = {}", w[1] - w[0], spec.d_min),
                ));
            }
        }
        if self.beta_pa.len() != self.positions.len() {
            return Err(Error::DimensionMismatch {
                context: "PaConfiguration::validate_geometry",
                expected: format!("{} beta_pa entries", self.positions.len()),
                actual: format!("{}", self.beta_pa.len()),
            });
        }
        Ok(())
    }
}

/// Coupled-mode coupling coefficient η of one PA against one mode.
///
/// η = (κ/φ)·sin(φL)·e^{−jΔβL/2} with φ = sqrt(κ² + (Δβ/2)²). The κ = 0
/// case is the removable singularity of κ/φ and means no field overlap, so
/// it returns exactly 0. |η| ≤ 1 for all inputs since κ/φ ≤ 1 and |sin| ≤ 1.
pub fn coupling_coefficient(kappa: f64, delta_beta: f64, pa_length: f64) -> C64 {
    debug_assert!(kappa >= 0.0 && pa_length > 0.0);
    if kappa == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let phi = (kappa * kappa + 0.25 * delta_beta * delta_beta).sqrt();
    let amplitude = kappa / phi * (phi * pa_length).sin();
    let phase = -0.5 * pa_length * delta_beta;
    C64::new(phase.cos(), phase.sin()).scale(amplitude)
}

/// Indices of `positions` in ascending-position order; ties keep input order.
fn position_rank_order(positions: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]));
    order
}

/// Cascaded in-waveguide gain matrix G, N×M.
///
/// Entry g_{n,m} = η_{n,m}·e^{−jβ_m x_n}·Π_{i upstream of n} sqrt(1 − |η_{i,m}|²):
/// the PA's own coupling, the guided phase accumulated to its position, and
/// the power left over after every PA closer to the feed has radiated. Rows
/// keep the input PA indexing; the cascade itself always runs in ascending
/// position order, so an unsorted configuration yields the row permutation
/// of its sorted counterpart.
pub fn cascaded_gain_matrix(
    spec: &WaveguideSpec,
    config: &PaConfiguration,
) -> Result<DMatrix<C64>, Error> {
    let n = spec.num_pas();
    let m = spec.num_modes();
    if config.positions.len() != n || config.beta_pa.len() != n {
        return Err(Error::DimensionMismatch {
            context: "cascaded_gain_matrix",
            expected: format!("{} positions and beta_pa entries", n),
            actual: format!(
                "{} positions, {} beta_pa",
                config.positions.len(),
                config.beta_pa.len()
            ),
        });
    }
    let order = position_rank_order(&config.positions);
    let mut g = DMatrix::<C64>::zeros(n, m);
    for (mi, &beta_m) in spec.mode_betas.iter().enumerate() {
        // Fraction of mode-m power still guided when the wave reaches the
        // next PA in line.
        let mut residual = 1.0_f64;
        for &ni in &order {
            let eta = coupling_coefficient(
                spec.kappa[(ni, mi)],
                config.beta_pa[ni] - beta_m,
                spec.pa_length,
            );
            let guided_phase = -beta_m * config.positions[ni];
            let phase = C64::new(guided_phase.cos(), guided_phase.sin());
            g[(ni, mi)] = eta * phase.scale(residual.sqrt());
            residual *= 1.0 - eta.norm_sqr();
        }
    }
    Ok(g)
}

/// Power radiation profile: entry (n, m) = |g_{n,m}|², the fraction of the
/// mode-m power injected at the feed that leaves the waveguide at PA n.
/// Column sums never exceed 1 (total radiated power is bounded by injected
/// power; the remainder stays guided past the last PA).
pub fn radiated_power_profile(
    spec: &WaveguideSpec,
    config: &PaConfiguration,
) -> Result<DMatrix<f64>, Error> {
    let g = cascaded_gain_matrix(spec, config)?;
    Ok(g.map(|z| z.norm_sqr()))
}
