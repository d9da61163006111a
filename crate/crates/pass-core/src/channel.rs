//! Free-space LoS user channels and the mode-domain effective channel.
//!
//! Each radiating PA reaches each user over a spherical-wave line-of-sight
//! path. Composing those per-PA channels with the in-waveguide gain matrix
//! collapses the N physical PAs into an M-dimensional effective channel per
//! user, one entry per guided mode / RF chain.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::waveguide::{PaConfiguration, WaveguideSpec};
use crate::C64;

/// Ground-plane user deployment. Users live at z = 0; the waveguide runs
/// along the x-axis at height `pa_height`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLayout {
    positions: Vec<[f64; 3]>,
}

impl UserLayout {
    /// Builds a layout from (x, y) ground coordinates.
    pub fn new(xy: Vec<(f64, f64)>) -> Result<Self, Error> {
        if xy.is_empty() {
            return Err(Error::invalid("users", "at least one user required"));
        }
        if xy.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid("users", "coordinates must be finite"));
        }
        Ok(Self {
            positions: xy.into_iter().map(|(x, y)| [x, y, 0.0]).collect(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, k: usize) -> [f64; 3] {
        self.positions[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64; 3]> {
        self.positions.iter()
    }
}

/// Spherical-wave LoS channel from every PA to one user.
///
/// Entry n = (λ/4π)·e^{−j k₀ R_n}/R_n with R_n the full 3D distance from PA
/// n (at height `pa_height` on the waveguide axis) to the user. A user
/// coincident with a PA has no finite free-space gain and is rejected.
pub fn los_channel(
    spec: &WaveguideSpec,
    config: &PaConfiguration,
    user: [f64; 3],
) -> Result<DVector<C64>, Error> {
    let lambda = spec.wavelength();
    let k0 = 2.0 * std::f64::consts::PI / lambda;
    let amp = lambda / (4.0 * std::f64::consts::PI);
    let mut h = DVector::<C64>::zeros(config.positions.len());
    for (n, &x) in config.positions.iter().enumerate() {
        let dx = x - user[0];
        let dy = -user[1];
        let dz = spec.pa_height - user[2];
        let r = (dx * dx + dy * dy + dz * dz).sqrt();
        if r <= 0.0 {
            return Err(Error::invalid(
                "user",
                format!("coincides with PA {} (zero path length)", n + 1),
            ));
        }
        let phase = -k0 * r;
        h[n] = C64::new(phase.cos(), phase.sin()).scale(amp / r);
    }
    Ok(h)
}

/// The composed channel: the in-waveguide gain matrix G, the raw per-user
/// LoS vectors, and the mode-domain product H_eff.
///
/// H_eff is stored K×M with row k = h_eff,k^H = h_k^H G, i.e. the conjugate
/// transpose of h_eff,k = G^H h_k. Row-as-user storage keeps precoding
/// expressions in matrix form: (H_eff · W)_{k,j} = h_eff,k^H w_j.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub gain: DMatrix<C64>,
    pub user_channels: Vec<DVector<C64>>,
    pub h_eff: DMatrix<C64>,
}

/// Composes G with per-user LoS vectors into an [`EffectiveChannel`].
pub fn effective_channel(
    gain: DMatrix<C64>,
    user_channels: Vec<DVector<C64>>,
) -> Result<EffectiveChannel, Error> {
    if user_channels.is_empty() {
        return Err(Error::invalid("user_channels", "at least one user required"));
    }
    let n = gain.nrows();
    let m = gain.ncols();
    for (k, h) in user_channels.iter().enumerate() {
        if h.len() != n {
            return Err(Error::DimensionMismatch {
                context: "effective_channel",
                expected: format!("user channel of length {}", n),
                actual: format!("user {} has length {}", k, h.len()),
            });
        }
    }
    let mut h_eff = DMatrix::<C64>::zeros(user_channels.len(), m);
    for (k, h) in user_channels.iter().enumerate() {
        h_eff.row_mut(k).copy_from(&(h.adjoint() * &gain));
    }
    if h_eff.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("h_eff", "non-finite entries"));
    }
    Ok(EffectiveChannel {
        gain,
        user_channels,
        h_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn spec(n: usize) -> WaveguideSpec {
        WaveguideSpec::new(
            vec![1009.2378, 645.7996],
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

    #[test]
    fn user_below_pa_sees_wavelength_over_height_magnitude() {
        let spec = spec(1);
        let config = PaConfiguration::new(vec![7.0], vec![1009.2378]);
        let h = los_channel(&spec, &config, [7.0, 0.0, 0.0]).unwrap();
        let expected = spec.wavelength() / (4.0 * std::f64::consts::PI * 3.0);
        assert_relative_eq!(h[0].norm(), expected, max_relative = 1e-14);
    }

    #[test]
    fn equidistant_users_see_identical_entries() {
        let spec = spec(1);
        let config = PaConfiguration::new(vec![5.0], vec![1009.2378]);
        let a = los_channel(&spec, &config, [5.0, 2.0, 0.0]).unwrap();
        let b = los_channel(&spec, &config, [5.0, -2.0, 0.0]).unwrap();
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn sample_entry_matches_frozen_scalar_oracle() {
        // PA at x = 2.5, user at (4.0, 1.2): R = sqrt(1.5^2 + 1.2^2 + 3^2).
        // Complex value frozen from an independent scalar evaluation at 28 GHz.
        let spec = spec(1);
        let config = PaConfiguration::new(vec![2.5], vec![1009.2378]);
        let h = los_channel(&spec, &config, [4.0, 1.2, 0.0]).unwrap();
        assert_relative_eq!(h[0].re, -5.6929489289277514e-5, max_relative = 1e-12);
        assert_relative_eq!(h[0].im, 2.3230443574286612e-4, max_relative = 1e-12);
        assert_relative_eq!(h[0].norm(), 2.3917842213826352e-4, max_relative = 1e-12);
    }

    #[test]
    fn coincident_user_is_rejected() {
        let mut spec = spec(1);
        spec.pa_height = 1.0;
        let config = PaConfiguration::new(vec![2.0], vec![1009.2378]);
        assert!(los_channel(&spec, &config, [2.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_gain_collapses_effective_channel() {
        let g = DMatrix::<C64>::zeros(3, 2);
        let h = vec![DVector::from_element(3, C64::new(1.0, -0.5)); 2];
        let eff = effective_channel(g, h).unwrap();
        assert!(eff.h_eff.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn scalar_case_is_a_conjugated_product() {
        let g = DMatrix::from_element(1, 1, C64::new(0.3, 0.4));
        let h = vec![DVector::from_element(1, C64::new(-0.2, 0.7))];
        let eff = effective_channel(g.clone(), h.clone()).unwrap();
        let expected = h[0][0].conj() * g[(0, 0)];
        assert_relative_eq!(eff.h_eff[(0, 0)].re, expected.re, max_relative = 1e-15);
        assert_relative_eq!(eff.h_eff[(0, 0)].im, expected.im, max_relative = 1e-15);
    }

    #[test]
    fn product_matches_triple_loop_recomputation() {
        // N = 4, M = 2, K = 2 instance with fixed pseudo-random entries;
        // H_eff[k][m] must equal sum_n conj(h_k[n]) * G[n][m].
        let mut g = DMatrix::<C64>::zeros(4, 2);
        let mut users = vec![DVector::<C64>::zeros(4), DVector::<C64>::zeros(4)];
        let mut t = 0.37_f64;
        let mut next = || {
            // Logistic-map stream keeps the instance reproducible without an RNG.
            t = 3.9 * t * (1.0 - t);
            2.0 * t - 1.0
        };
        for n in 0..4 {
            for m in 0..2 {
                g[(n, m)] = C64::new(next(), next());
            }
            for h in users.iter_mut() {
                h[n] = C64::new(next(), next());
            }
        }
        let eff = effective_channel(g.clone(), users.clone()).unwrap();
        for k in 0..2 {
            for m in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..4 {
                    acc += users[k][n].conj() * g[(n, m)];
                }
                assert_relative_eq!(eff.h_eff[(k, m)].re, acc.re, max_relative = 1e-13);
                assert_relative_eq!(eff.h_eff[(k, m)].im, acc.im, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = DMatrix::<C64>::zeros(3, 2);
        let h = vec![DVector::<C64>::zeros(2)];
        assert!(effective_channel(g, h).is_err());
        assert!(UserLayout::new(vec![]).is_err());
    }
}
