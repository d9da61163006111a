//! KKT-parameterized beamforming (KPBF), power normalization, SINR and
//! sum rate.
//!
//! The precoder family w̃_k = sqrt(p_k)·(I + (1/σ²)Σ_j λ_j h_j h_j^H)^{−1} h_k
//! spans the classical linear precoders: λ = 0 is matched filtering, large
//! uniform λ approaches zero forcing, and intermediate values trace out
//! MMSE-style tradeoffs. λ and the power split p live on unconstrained
//! coordinates (exp and softmax) so a box-constrained search can move them
//! freely.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::Error;
use crate::C64;

/// Unconstrained beamforming coordinates and their constrained images.
#[derive(Debug, Clone, PartialEq)]
pub struct KpbfParams {
    pub z_lambda: DVector<f64>,
    pub z_p: DVector<f64>,
}

impl KpbfParams {
    pub fn new(z_lambda: DVector<f64>, z_p: DVector<f64>) -> Result<Self, Error> {
        if z_lambda.len() != z_p.len() {
            return Err(Error::DimensionMismatch {
                context: "KpbfParams::new",
                expected: format!("z_p of length {}", z_lambda.len()),
                actual: format!("{}", z_p.len()),
            });
        }
        if z_lambda.iter().chain(z_p.iter()).any(|z| !z.is_finite()) {
            return Err(Error::invalid("z_lambda/z_p", "entries must be finite"));
        }
        Ok(Self { z_lambda, z_p })
    }

    /// Dual weights λ = exp(z_λ), entrywise. Always positive and finite for
    /// finite z.
    pub fn lambda(&self) -> DVector<f64> {
        exp_reparam(self.z_lambda.as_slice())
    }

    /// Relative power split p_rel = softmax(z_p). On the simplex by
    /// construction.
    pub fn p_rel(&self) -> DVector<f64> {
        softmax(self.z_p.as_slice())
    }
}

/// Entrywise exponential map for the dual weights.
pub fn exp_reparam(z: &[f64]) -> DVector<f64> {
    DVector::from_iterator(z.len(), z.iter().map(|&v| v.exp()))
}

/// Numerically stable softmax: shifts by the maximum before exponentiating,
/// so the output sums to 1 even for large-magnitude inputs.
pub fn softmax(z: &[f64]) -> DVector<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = DVector::from_iterator(z.len(), z.iter().map(|&v| (v - max).exp()));
    let sum: f64 = out.iter().sum();
    out /= sum;
    out
}

/// Receiver noise power, linear watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2_watts: f64) -> Result<Self, Error> {
        if !sigma2_watts.is_finite() || sigma2_watts <= 0.0 {
            return Err(Error::invalid("sigma2", "must be positive and finite"));
        }
        Ok(Self {
            sigma2: sigma2_watts,
        })
    }

    pub fn watts(&self) -> f64 {
        self.sigma2
    }
}

/// Normalized downlink precoder. Columns are per-user beamvectors; the
/// Frobenius norm squared equals the power budget unless the unnormalized
/// input was identically zero, in which case `degenerate` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub weights: DMatrix<C64>,
    pub degenerate: bool,
}

impl Precoder {
    /// Transmit power actually used, ‖W‖_F².
    pub fn power(&self) -> f64 {
        self.weights.norm_squared()
    }
}

/// Unnormalized KPBF precoder, M×K with columns w̃_k = sqrt(p_k)·A^{−1} h_k
/// where A = I_M + (1/σ²)·Σ_j λ_j h_j h_j^H and h_j is user j's effective
/// channel (`h_eff` row j, conjugate-transposed).
///
/// A is Hermitian positive definite for any λ ≥ 0, so the per-column solve
/// goes through a Cholesky factorization; a factorization failure (possible
/// only when λ/σ² drives A past f64 conditioning) is reported as an error
/// rather than silently returning garbage.
pub fn kpbf_unnormalized(
    h_eff: &DMatrix<C64>,
    lambda: &DVector<f64>,
    p_rel: &DVector<f64>,
    sigma2: f64,
) -> Result<DMatrix<C64>, Error> {
    let k = h_eff.nrows();
    let m = h_eff.ncols();
    if lambda.len() != k || p_rel.len() != k {
        return Err(Error::DimensionMismatch {
            context: "kpbf_unnormalized",
            expected: format!("lambda and p_rel of length {}", k),
            actual: format!("{} and {}", lambda.len(), p_rel.len()),
        });
    }
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(Error::invalid("sigma2", "must be positive and finite"));
    }
    if lambda.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(Error::invalid("lambda", "entries must be finite and >= 0"));
    }
    let p_sum: f64 = p_rel.iter().sum();
    if p_rel.iter().any(|&p| !p.is_finite() || p < 0.0) || (p_sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("p_rel", "must lie on the probability simplex"));
    }
    if h_eff.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("h_eff", "non-finite entries"));
    }

    let mut a = DMatrix::<C64>::identity(m, m);
    for j in 0..k {
        let h_j = h_eff.row(j).adjoint();
        a += &h_j * h_j.adjoint() * C64::new(lambda[j] / sigma2, 0.0);
    }
    let chol = Cholesky::new(a).ok_or(Error::SolveFailed {
        context: "kpbf_unnormalized",
    })?;

    let mut w = DMatrix::<C64>::zeros(m, k);
    for j in 0..k {
        let h_j = h_eff.row(j).adjoint();
        let col = chol.solve(&h_j) * C64::new(p_rel[j].sqrt(), 0.0);
        w.column_mut(j).copy_from(&col);
    }
    if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SolveFailed {
            context: "kpbf_unnormalized",
        });
    }
    Ok(w)
}

/// Scales W̃ so the transmit power ‖W‖_F² equals `p_max` exactly. A zero
/// input cannot be scaled onto the power sphere; it comes back as the zero
/// precoder with the degenerate flag set instead of an error, so callers in
/// a search loop can score it and move on.
pub fn normalize_power(w_tilde: &DMatrix<C64>, p_max: f64) -> Result<Precoder, Error> {
    if !p_max.is_finite() || p_max <= 0.0 {
        return Err(Error::invalid("p_max", "must be positive and finite"));
    }
    let fro2 = w_tilde.norm_squared();
    if !fro2.is_finite() {
        return Err(Error::invalid("w_tilde", "non-finite entries"));
    }
    if fro2 == 0.0 {
        return Ok(Precoder {
            weights: w_tilde.clone(),
            degenerate: true,
        });
    }
    Ok(Precoder {
        weights: w_tilde * C64::new((p_max / fro2).sqrt(), 0.0),
        degenerate: false,
    })
}

/// SINR of user k: |h_k^H w_k|² over interference from the other columns
/// plus noise. With H_eff stored rows-as-h_k^H this is |S_{kk}|² /
/// (Σ_{j≠k}|S_{kj}|² + σ²) for S = H_eff·W.
pub fn sinr(h_eff: &DMatrix<C64>, w: &DMatrix<C64>, sigma2: f64, k: usize) -> f64 {
    let s = h_eff.row(k) * w;
    let signal = s[k].norm_sqr();
    let interference: f64 = (0..s.len()).filter(|&j| j != k).map(|j| s[j].norm_sqr()).sum();
    signal / (interference + sigma2)
}

/// Sum rate Σ_k log2(1 + γ_k), bits/s/Hz.
pub fn sum_rate(h_eff: &DMatrix<C64>, w: &DMatrix<C64>, sigma2: f64) -> f64 {
    let s = h_eff * w;
    let k = h_eff.nrows();
    let mut rate = 0.0;
    for i in 0..k {
        let signal = s[(i, i)].norm_sqr();
        let interference: f64 = (0..k).filter(|&j| j != i).map(|j| s[(i, j)].norm_sqr()).sum();
        rate += (1.0 + signal / (interference + sigma2)).log2();
    }
    rate
}
