//! Scenario files: a flat TOML schema in which every key is optional and
//! absent keys fall back to the two-mode 28 GHz reference deployment.
//! Unknown keys are rejected so a typo cannot silently revert a physics
//! constant to its default. Powers cross this boundary in dBm and live as
//! linear watts everywhere past it.

use std::path::Path;

use anyhow::{bail, Context, Result};
use pass_core::scenario::{dbm_to_watts, Scenario};
use serde::Deserialize;

/// Raw file schema; units are spelled out in the key names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub carrier_freq_hz: Option<f64>,
    pub waveguide_length_m: Option<f64>,
    pub num_pas: Option<usize>,
    pub num_users: Option<usize>,
    pub mode_betas_rad_per_m: Option<Vec<f64>>,
    pub kappa_rad_per_m: Option<f64>,
    pub pa_length_m: Option<f64>,
    pub pa_height_m: Option<f64>,
    pub d_min_m: Option<f64>,
    pub sigma2_dbm: Option<f64>,
    pub p_max_dbm: Option<f64>,
    pub user_seed: Option<u64>,
    pub user_y_min_m: Option<f64>,
    pub user_y_max_m: Option<f64>,
    pub beta_min_rad_per_m: Option<f64>,
    pub beta_max_rad_per_m: Option<f64>,
}

fn positive(key: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value <= 0.0 {
        bail!("{key} must be positive and finite, got {value}");
    }
    Ok(value)
}

impl RawScenario {
    /// Applies defaults, validates every provided key by name, and builds
    /// the runtime scenario.
    pub fn into_scenario(self) -> Result<Scenario> {
        let mut s = Scenario::two_mode_default();

        if let Some(v) = self.carrier_freq_hz {
            s.carrier_freq = positive("carrier_freq_hz", v)?;
        }
        if let Some(v) = self.waveguide_length_m {
            s.waveguide_length = positive("waveguide_length_m", v)?;
        }
        if let Some(v) = self.num_pas {
            if v == 0 {
                bail!("num_pas must be at least 1");
            }
            s.num_pas = v;
        }
        if let Some(v) = self.num_users {
            if v == 0 {
                bail!("num_users must be at least 1");
            }
            s.num_users = v;
        }
        if let Some(v) = self.mode_betas_rad_per_m {
            if v.is_empty() {
                bail!("mode_betas_rad_per_m must list at least one mode");
            }
            for &b in &v {
                positive("mode_betas_rad_per_m", b)?;
            }
            s.mode_betas = v;
        }
        if let Some(v) = self.kappa_rad_per_m {
            if !v.is_finite() || v < 0.0 {
                bail!("kappa_rad_per_m must be nonnegative and finite, got {v}");
            }
            s.kappa = v;
        }
        if let Some(v) = self.pa_length_m {
            s.pa_length = positive("pa_length_m", v)?;
        }
        if let Some(v) = self.pa_height_m {
            s.pa_height = positive("pa_height_m", v)?;
        }
        if let Some(v) = self.d_min_m {
            s.d_min = positive("d_min_m", v)?;
        }
        if let Some(v) = self.sigma2_dbm {
            if !v.is_finite() {
                bail!("sigma2_dbm must be finite, got {v}");
            }
            s.sigma2_watts = dbm_to_watts(v);
        }
        if let Some(v) = self.p_max_dbm {
            if !v.is_finite() {
                bail!("p_max_dbm must be finite, got {v}");
            }
            s.p_max_watts = dbm_to_watts(v);
        }
        if let Some(v) = self.user_seed {
            s.user_seed = v;
        }
        let y_lo = self.user_y_min_m.unwrap_or(s.user_y_range.0);
        let y_hi = self.user_y_max_m.unwrap_or(s.user_y_range.1);
        if !y_lo.is_finite() || !y_hi.is_finite() || y_lo > y_hi {
            bail!("user_y_min_m={y_lo} and user_y_max_m={y_hi} must satisfy min <= max");
        }
        s.user_y_range = (y_lo, y_hi);

        match (self.beta_min_rad_per_m, self.beta_max_rad_per_m) {
            (None, None) => {}
            (Some(lo), Some(hi)) => {
                positive("beta_min_rad_per_m", lo)?;
                positive("beta_max_rad_per_m", hi)?;
                if lo > hi {
                    bail!(
                        "beta_min_rad_per_m={lo} must not exceed beta_max_rad_per_m={hi}"
                    );
                }
                s.beta_interval = Some((lo, hi));
            }
            _ => bail!(
                "beta_min_rad_per_m and beta_max_rad_per_m must be given together"
            ),
        }

        let packed = (s.num_pas.saturating_sub(1)) as f64 * s.d_min;
        if packed > s.waveguide_length {
            bail!(
                "(num_pas - 1) * d_min_m = {packed} m does not fit \
                 waveguide_length_m = {} m",
                s.waveguide_length
            );
        }
        // Final cross-field check through the runtime constructors.
        s.waveguide_spec().context("scenario is not realizable")?;
        s.users().context("scenario is not realizable")?;
        Ok(s)
    }
}

/// Parses scenario TOML text. Errors name the offending key.
pub fn parse_scenario_toml(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).context("invalid scenario file")?;
    raw.into_scenario()
}

/// Loads a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    parse_scenario_toml(&text)
        .with_context(|| format!("in scenario file {}", path.display()))
}
