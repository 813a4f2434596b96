//! QoS targets and the per-stream constants derived from channel gains.

use crate::channel::ChannelEigen;
use crate::error::{Error, Result};
use crate::linear::{gamma_from_gains, hyperbola_coeffs, inflection_alpha, tangent_beta};
use crate::nonlinear::{inflection_phi, tangent_psi};

/// Per-stream MSE targets, non-decreasing, each in (0, 1].
///
/// `kappa` caches the natural logarithms used by the log-domain solver.
#[derive(Debug, Clone, PartialEq)]
pub struct QosVector {
    pub eta: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl QosVector {
    /// Validates and wraps a target vector.
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::invalid("QoS vector must not be empty"));
        }
        for (i, &e) in eta.iter().enumerate() {
            if !(e.is_finite() && e > 0.0 && e <= 1.0) {
                return Err(Error::invalid(format!(
                    "QoS target {i} must lie in (0, 1], got {e}"
                )));
            }
            if e < 1e-9 {
                return Err(Error::invalid(format!(
                    "QoS target {i} is below the supported floor of 1e-9, got {e}"
                )));
            }
        }
        if eta.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::invalid(format!(
                "QoS targets must be non-decreasing, got {eta:?}"
            )));
        }
        let kappa = eta.iter().map(|e| e.ln()).collect();
        Ok(QosVector { eta, kappa })
    }

    /// `k` identical targets.
    pub fn equal(k: usize, eta: f64) -> Result<Self> {
        QosVector::new(vec![eta; k])
    }

    /// Number of streams.
    pub fn k(&self) -> usize {
        self.eta.len()
    }

    /// True when every stream carries the same target.
    pub fn is_equal(&self) -> bool {
        self.eta.windows(2).all(|p| p[0] == p[1])
    }

    /// Partial sums of the targets, length `k` (index j holds the sum of
    /// the first j+1 targets).
    pub fn prefix_sums(&self) -> Vec<f64> {
        prefix(&self.eta)
    }

    /// Partial sums of the log targets.
    pub fn prefix_log_sums(&self) -> Vec<f64> {
        prefix(&self.kappa)
    }

    /// Sum of all targets.
    pub fn sum(&self) -> f64 {
        self.eta.iter().sum()
    }
}

pub(crate) fn prefix(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

/// Channel-derived constants for every retained stream.
///
/// Streams are ordered by non-increasing gain products, matching
/// [`ChannelEigen`]. All entries are pure functions of the two hop gains
/// and `rho`, computed once and reused by every solver.
#[derive(Debug, Clone)]
pub struct StreamProfile {
    /// Noise variance the profile was built with.
    pub rho: f64,
    /// Top-k squared singular values of the first hop.
    pub lam_h1: Vec<f64>,
    /// Top-k squared singular values of the second hop.
    pub lam_h2: Vec<f64>,
    /// Gain-imbalance factor, `>= 2` with equality iff the hops match.
    pub gamma: Vec<f64>,
    /// Power unit `rho / sqrt(lam_h1 * lam_h2)`.
    pub scale: Vec<f64>,
    /// Hyperbola surrogate numerator (best sup-norm fit to the power curve).
    pub w: Vec<f64>,
    /// Hyperbola surrogate offset.
    pub z: Vec<f64>,
    /// Inflection point of the power curve, in [8/9, 1).
    pub alpha: Vec<f64>,
    /// Tangency point of the convex underestimator, in [3/4, 1).
    pub beta: Vec<f64>,
    /// Inflection point of the log-domain power curve.
    pub phi: Vec<f64>,
    /// Tangency point of the log-domain underestimator.
    pub psi: Vec<f64>,
}

impl StreamProfile {
    /// Builds the profile from raw per-stream gains.
    pub fn from_gains(lam_h1: &[f64], lam_h2: &[f64], rho: f64) -> Result<Self> {
        if lam_h1.is_empty() || lam_h1.len() != lam_h2.len() {
            return Err(Error::invalid(format!(
                "gain vectors must be non-empty and equal length, got {} and {}",
                lam_h1.len(),
                lam_h2.len()
            )));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::invalid(format!(
                "noise variance must be positive and finite, got {rho}"
            )));
        }
        for (i, (&l1, &l2)) in lam_h1.iter().zip(lam_h2).enumerate() {
            if !(l1.is_finite() && l1 > 0.0 && l2.is_finite() && l2 > 0.0) {
                return Err(Error::invalid(format!(
                    "stream {i} gains must be positive and finite, got ({l1}, {l2})"
                )));
            }
        }
        let k = lam_h1.len();
        let mut p = StreamProfile {
            rho,
            lam_h1: lam_h1.to_vec(),
            lam_h2: lam_h2.to_vec(),
            gamma: Vec::with_capacity(k),
            scale: Vec::with_capacity(k),
            w: Vec::with_capacity(k),
            z: Vec::with_capacity(k),
            alpha: Vec::with_capacity(k),
            beta: Vec::with_capacity(k),
            phi: Vec::with_capacity(k),
            psi: Vec::with_capacity(k),
        };
        for (&l1, &l2) in lam_h1.iter().zip(lam_h2) {
            let gamma = gamma_from_gains(l1, l2)?;
            let scale = rho / (l1 * l2).sqrt();
            let (w, z) = hyperbola_coeffs(l1, l2, rho)?;
            p.gamma.push(gamma);
            p.scale.push(scale);
            p.w.push(w);
            p.z.push(z);
            p.alpha.push(inflection_alpha(gamma)?);
            p.beta.push(tangent_beta(gamma)?);
            p.phi.push(inflection_phi(gamma)?);
            p.psi.push(tangent_psi(gamma)?);
        }
        Ok(p)
    }

    /// Builds the profile from a channel decomposition.
    pub fn from_eigen(eigen: &ChannelEigen, rho: f64) -> Result<Self> {
        StreamProfile::from_gains(&eigen.lam_h1, &eigen.lam_h2, rho)
    }

    /// Number of streams.
    pub fn k(&self) -> usize {
        self.gamma.len()
    }
}
