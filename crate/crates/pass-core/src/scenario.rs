//! Experiment scenario: the full physical and statistical setup of one
//! benchmark run, shared by the library tests and the CLI.
//!
//! All power values are linear watts here; dB-milliwatt conversion belongs
//! to whatever boundary parses human-facing configuration.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::UserLayout;
use crate::error::Error;
use crate::waveguide::WaveguideSpec;

/// dBm → linear watts: P = 10^((dBm − 30)/10).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Linear watts → dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// One fully specified deployment: geometry, waveguide modes, coupling,
/// power budget, noise floor, and the seeded user placement.
///
/// The number of modes is the length of `mode_betas`; the number of users
/// and PAs are explicit so sweeps can rescale them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Waveguide length; PAs may sit anywhere in [0, waveguide_length].
    pub waveguide_length: f64,
    pub num_pas: usize,
    pub num_users: usize,
    /// Guided-mode propagation constants, rad/m.
    pub mode_betas: Vec<f64>,
    /// Uniform overlap coupling strength applied to every (PA, mode) pair,
    /// rad/m.
    pub kappa: f64,
    /// PA contact length, m.
    pub pa_length: f64,
    /// Waveguide height above the user plane, m.
    pub pa_height: f64,
    /// Minimum PA spacing, m.
    pub d_min: f64,
    /// Noise power, watts.
    pub sigma2_watts: f64,
    /// Transmit power budget, watts.
    pub p_max_watts: f64,
    /// Seed for the user placement draws.
    pub user_seed: u64,
    /// Users drop uniformly at x in [0, waveguide_length], y in this range.
    pub user_y_range: (f64, f64),
    /// Optional tuning interval for continuously adjustable propagation
    /// constants; defaults to [0.9·min β_m, 1.1·max β_m].
    pub beta_interval: Option<(f64, f64)>,
}

impl Scenario {
    /// The two-mode 28 GHz reference deployment: a 20 m waveguide carrying
    /// modes at β = 1009.2378 and 645.7996 rad/m, 6 mm PAs, two users, a
    /// −90 dBm noise floor, and a 25 dBm power budget.
    pub fn two_mode_default() -> Self {
        Self {
            carrier_freq: 28e9,
            waveguide_length: 20.0,
            num_pas: 8,
            num_users: 2,
            mode_betas: vec![1009.2378, 645.7996],
            kappa: 150.0,
            pa_length: 0.006,
            pa_height: 3.0,
            d_min: 0.5 * crate::SPEED_OF_LIGHT / 28e9,
            sigma2_watts: dbm_to_watts(-90.0),
            p_max_watts: dbm_to_watts(25.0),
            user_seed: 1,
            user_y_range: (-5.0, 5.0),
            beta_interval: None,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.mode_betas.len()
    }

    /// Builds the validated waveguide spec with the scenario's uniform
    /// coupling matrix.
    pub fn waveguide_spec(&self) -> Result<WaveguideSpec, Error> {
        self.spec_with_modes(self.mode_betas.clone())
    }

    /// Same geometry, different mode set; used by single-mode baselines.
    pub fn spec_with_modes(&self, mode_betas: Vec<f64>) -> Result<WaveguideSpec, Error> {
        if self.num_pas == 0 {
            return Err(Error::invalid("num_pas", "need at least one PA"));
        }
        WaveguideSpec::new(
            mode_betas.clone(),
            DMatrix::from_element(self.num_pas, mode_betas.len(), self.kappa),
            self.pa_length,
            0.0,
            self.waveguide_length,
            self.d_min,
            self.pa_height,
            self.carrier_freq,
        )
    }

    /// Seeded user drop: user k draws x uniform over the waveguide span and
    /// y uniform over `user_y_range`, in user order from one stream.
    pub fn users(&self) -> Result<UserLayout, Error> {
        if self.num_users == 0 {
            return Err(Error::invalid("num_users", "need at least one user"));
        }
        let (y_lo, y_hi) = self.user_y_range;
        if !y_lo.is_finite() || !y_hi.is_finite() || y_lo > y_hi {
            return Err(Error::invalid("user_y_range", "need finite lo <= hi"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.user_seed);
        let xy = (0..self.num_users)
            .map(|_| {
                let x = rng.random::<f64>() * self.waveguide_length;
                let y = y_lo + rng.random::<f64>() * (y_hi - y_lo);
                (x, y)
            })
            .collect();
        UserLayout::new(xy)
    }

    /// Tuning interval for continuously adjustable β: the configured
    /// override, or [0.9·min β_m, 1.1·max β_m].
    pub fn beta_interval(&self) -> (f64, f64) {
        self.beta_interval.unwrap_or_else(|| {
            let min = self.mode_betas.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = self.mode_betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0.9 * min, 1.1 * max)
        })
    }

    /// The shared propagation constant of the uniform-combining protocol:
    /// the mean of the mode constants (for two modes, their half-sum).
    pub fn uniform_beta(&self) -> f64 {
        self.mode_betas.iter().sum::<f64>() / self.mode_betas.len() as f64
    }

    pub fn with_num_pas(mut self, num_pas: usize) -> Self {
        self.num_pas = num_pas;
        self
    }

    pub fn with_p_max_watts(mut self, p_max_watts: f64) -> Self {
        self.p_max_watts = p_max_watts;
        self
    }
}
