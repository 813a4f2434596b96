//! Wiener-receiver branch: per-stream power curves, their closed-form
//! landmarks, the prefix-constrained allocation algorithm, and the convex
//! lower bound.
//!
//! Everything is expressed per stream in the MSE variable `lam` in (0, 1]:
//! `lam = 1` means the stream is silent (zero power), `lam -> 0` costs
//! unbounded power. The transmit power needed to hit MSE `lam` on a stream
//! with hop gains `(lam_h1, lam_h2)` is
//!
//! ```text
//! P(lam) = scale * (gamma*(1 - lam) + 2*sqrt(1 - lam)) / lam
//! gamma  = (lam_h1 + lam_h2) / sqrt(lam_h1 * lam_h2)
//! scale  = rho / sqrt(lam_h1 * lam_h2)
//! ```
//!
//! `P` is convex only up to an inflection point `alpha`; the allocator
//! therefore minimizes the tight hyperbolic surrogate `w/lam` (exactly
//! solvable by [`solve_hyperbola`]), and [`lower_bound_linear`] certifies it
//! against the convex underestimator that follows `P` up to the tangency
//! point `beta` and continues along the tangent line through `(1, 0)`.

use crate::channel::ChannelEigen;
use crate::error::{Error, Result};
use crate::oracles::{
    convex_solve, FeasibleRegion, OracleResult, SeparableObjective, SolverConfig, LAM_FLOOR,
};
use crate::qos::QosVector;
use crate::qos::StreamProfile;

/// Distance kept from the `lam = 1` endpoint when evaluating derivatives,
/// where they diverge.
pub(crate) const ENDPOINT_CLAMP: f64 = 1e-12;

/// Gain-imbalance factor `gamma = sqrt(l1/l2) + sqrt(l2/l1)`.
///
/// Always at least 2, with equality iff the hop gains are equal.
pub fn gamma_from_gains(lam_h1: f64, lam_h2: f64) -> Result<f64> {
    if !(lam_h1.is_finite() && lam_h1 > 0.0 && lam_h2.is_finite() && lam_h2 > 0.0) {
        return Err(Error::domain(format!(
            "hop gains must be positive and finite, got ({lam_h1}, {lam_h2})"
        )));
    }
    let r = (lam_h1 / lam_h2).sqrt();
    Ok((r + 1.0 / r).max(2.0))
}

/// Power curve value `P(lam)` for normalized parameters.
pub(crate) fn p_value(lam: f64, gamma: f64, scale: f64) -> f64 {
    let lam = lam.max(LAM_FLOOR);
    let om = (1.0 - lam).max(0.0);
    scale * (gamma * om + 2.0 * om.sqrt()) / lam
}

/// First derivative of the power curve (negative on the whole domain).
pub(crate) fn p_deriv(lam: f64, gamma: f64, scale: f64) -> f64 {
    let lam = lam.clamp(LAM_FLOOR, 1.0 - ENDPOINT_CLAMP);
    let om = 1.0 - lam;
    -scale * (gamma + (2.0 - lam) / om.sqrt()) / (lam * lam)
}

/// Second derivative of the power curve; changes sign at the inflection.
pub(crate) fn p_second(lam: f64, gamma: f64, scale: f64) -> f64 {
    let lam = lam.clamp(LAM_FLOOR, 1.0 - ENDPOINT_CLAMP);
    let om = 1.0 - lam;
    let om32 = om * om.sqrt();
    scale * (3.0 * lam * lam - 12.0 * lam + 8.0 + 4.0 * gamma * om32) / (2.0 * lam.powi(3) * om32)
}

/// Transmit power a single stream needs to reach MSE `lam`.
pub fn per_stream_power(lam: f64, lam_h1: f64, lam_h2: f64, rho: f64) -> Result<f64> {
    if !(lam.is_finite() && lam > 0.0 && lam <= 1.0) {
        return Err(Error::domain(format!("MSE must lie in (0, 1], got {lam}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::domain(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    let gamma = gamma_from_gains(lam_h1, lam_h2)?;
    let scale = rho / (lam_h1 * lam_h2).sqrt();
    Ok(p_value(lam, gamma, scale))
}

/// Source/relay SNR-split factors `(A, B)` that realize MSE `lam` at
/// minimum power. Both are non-negative; the rejected sign choice of the
/// stationarity system always carries a negative component.
pub fn ab_from_lambda(lam: f64, lam_h1: f64, lam_h2: f64) -> Result<(f64, f64)> {
    if !(lam.is_finite() && lam > 0.0 && lam <= 1.0) {
        return Err(Error::domain(format!("MSE must lie in (0, 1], got {lam}")));
    }
    if !(lam_h1.is_finite() && lam_h1 > 0.0 && lam_h2.is_finite() && lam_h2 > 0.0) {
        return Err(Error::domain(format!(
            "hop gains must be positive and finite, got ({lam_h1}, {lam_h2})"
        )));
    }
    let om = (1.0 - lam).max(0.0);
    let sq = om.sqrt();
    let r = (lam_h1 / lam_h2).sqrt();
    let a = (om + r * sq) / lam;
    let b = (om + sq / r) / lam;
    Ok((a, b))
}

/// Lemma-regime test: with total target mass at most 8/9 every reachable
/// MSE stays inside the provably convex part of each power curve.
pub fn check_convexity_condition(qos: &QosVector) -> bool {
    qos.sum() <= 8.0 / 9.0
}

fn validate_gamma(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 2.0 - 1e-12) {
        return Err(Error::domain(format!(
            "gain-imbalance factor must be at least 2, got {gamma}"
        )));
    }
    Ok(gamma.max(2.0))
}

/// Inflection point of the power curve: the unique root in (0, 1) of
/// `3 lam^2 - 12 lam + 8 = -4 gamma (1 - lam)^{3/2}`, in [8/9, 1).
///
/// Uses the closed form of the associated quartic, with the balanced-gain
/// limit 8/9 returned exactly when `gamma^2 - 4 < 1e-9`. A final Newton
/// step keeps the residual at the floating-point floor.
pub fn inflection_alpha(gamma: f64) -> Result<f64> {
    let gamma = validate_gamma(gamma)?;
    let d = gamma * gamma - 4.0;
    if d < 1e-9 {
        return Ok(8.0 / 9.0);
    }
    let xi = 0.25 - 1.0 / (16.0 * d).cbrt() + 1.0 / (4.0 * d * d).cbrt();
    let sq = xi.sqrt();
    let inner = (0.75 - xi + gamma * gamma / (4.0 * sq * d)).max(0.0);
    let mut alpha = 1.0 / (0.75 - 0.5 * sq + 0.5 * inner.sqrt());
    for _ in 0..3 {
        let om = (1.0 - alpha).max(0.0);
        let h = 3.0 * alpha * alpha - 12.0 * alpha + 8.0 + 4.0 * gamma * om * om.sqrt();
        let hp = 6.0 * alpha - 12.0 - 6.0 * gamma * om.sqrt();
        alpha -= h / hp;
    }
    if !(alpha.is_finite() && (8.0 / 9.0 - 1e-9..1.0).contains(&alpha)) {
        return Err(Error::Numerical(format!(
            "inflection point left its range: {alpha} at gamma {gamma}"
        )));
    }
    Ok(alpha.max(8.0 / 9.0))
}

/// Tangency point of the convex underestimator: the root of
/// `3 beta - 2 = gamma (1 - beta)^{3/2}`, in [3/4, 1).
///
/// The tangent of the power curve at `beta` passes through `(1, 0)`, so the
/// piecewise bound stays below the curve everywhere.
pub fn tangent_beta(gamma: f64) -> Result<f64> {
    let gamma = validate_gamma(gamma)?;
    let d = (gamma * gamma - 4.0).max(0.0);
    let eps = ((gamma * gamma - 2.0 + gamma * d.sqrt()) / 2.0).cbrt();
    let mut beta = 1.0 - eps / ((eps + 1.0) * (eps + 1.0));
    for _ in 0..3 {
        let om = (1.0 - beta).max(0.0);
        let t = 3.0 * beta - 2.0 - gamma * om * om.sqrt();
        let tp = 3.0 + 1.5 * gamma * om.sqrt();
        beta -= t / tp;
    }
    if !(beta.is_finite() && (0.75 - 1e-9..1.0).contains(&beta)) {
        return Err(Error::Numerical(format!(
            "tangency point left its range: {beta} at gamma {gamma}"
        )));
    }
    Ok(beta)
}

/// Coefficients `(w, z)` of the sup-norm-optimal hyperbolic surrogate
/// `w / lam + z` of the power curve on (0, 1].
///
/// `w` also equals `rho * (lam_h1^{-1/2} + lam_h2^{-1/2})^2`.
pub fn hyperbola_coeffs(lam_h1: f64, lam_h2: f64, rho: f64) -> Result<(f64, f64)> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::domain(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    let gamma = gamma_from_gains(lam_h1, lam_h2)?;
    let scale = rho / (lam_h1 * lam_h2).sqrt();
    Ok((scale * (gamma + 2.0), -scale * (2.0 * gamma + 3.0) / 2.0))
}

/// Surrogate objective value sum `w_n / lam_n`.
pub fn hyperbola_objective(w: &[f64], lam: &[f64]) -> f64 {
    w.iter().zip(lam).map(|(w, l)| w / l).sum()
}

fn validate_weights(w: &[f64], k: usize) -> Result<()> {
    if w.len() != k {
        return Err(Error::invalid(format!(
            "need one weight per stream: {} weights, {} targets",
            w.len(),
            k
        )));
    }
    for (i, &wi) in w.iter().enumerate() {
        if !(wi.is_finite() && wi > 0.0) {
            return Err(Error::invalid(format!(
                "weight {i} must be positive and finite, got {wi}"
            )));
        }
    }
    if w.windows(2).any(|p| p[1] < p[0] * (1.0 - 1e-9)) {
        return Err(Error::invalid(format!(
            "weights must be non-decreasing (streams sorted by gain), got {w:?}"
        )));
    }
    Ok(())
}

/// Stable ordering of `w` by value; the identity whenever `w` is already
/// sorted, so index order breaks ties and absorbs sub-tolerance noise.
fn stable_order(w: &[f64]) -> Option<Vec<usize>> {
    if w.windows(2).all(|p| p[1] >= p[0]) {
        return None;
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
    Some(order)
}

/// Exact minimizer of `sum w_n / lam_n` over the prefix-constrained target
/// set: partial sums of `lam` capped by partial sums of `eta`, each entry
/// in (0, 1].
///
/// Processes streams from the weakest down, assigning each the largest MSE
/// the remaining target mass allows, then folds the unused mass into the
/// next prefix. Ordering of the output is not enforced anywhere; it emerges
/// from the weight ordering.
pub fn solve_hyperbola(w: &[f64], qos: &QosVector) -> Result<Vec<f64>> {
    let k = qos.k();
    validate_weights(w, k)?;
    // Sub-tolerance ordering noise is repaired by a stable sort; the result
    // is mapped back to the caller's stream order.
    if let Some(order) = stable_order(w) {
        let sorted: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        let lam_sorted = solve_hyperbola_sorted(&sorted, qos)?;
        let mut lam = vec![0.0; k];
        for (pos, &i) in order.iter().enumerate() {
            lam[i] = lam_sorted[pos];
        }
        return Ok(lam);
    }
    solve_hyperbola_sorted(w, qos)
}

fn solve_hyperbola_sorted(w: &[f64], qos: &QosVector) -> Result<Vec<f64>> {
    let k = qos.k();
    // delta[j] = capacity of the first j streams; delta[0] = 0.
    let mut delta = Vec::with_capacity(k + 1);
    delta.push(0.0);
    delta.extend(qos.prefix_sums());
    // sqrt_prefix[j] = sum of sqrt(w) over the first j streams.
    let mut sqrt_prefix = Vec::with_capacity(k + 1);
    sqrt_prefix.push(0.0);
    for &wi in w {
        sqrt_prefix.push(sqrt_prefix.last().unwrap() + wi.sqrt());
    }
    let mut lam = vec![0.0; k];
    for m in (1..=k).rev() {
        let mut best = f64::NEG_INFINITY;
        for l in 0..m {
            let cand = (delta[m] - delta[l]) / (sqrt_prefix[m] - sqrt_prefix[l]);
            if cand > best {
                best = cand;
            }
        }
        let lam_m = (w[m - 1].sqrt() * best).min(1.0);
        lam[m - 1] = lam_m;
        delta[m - 1] = delta[m] - lam_m;
    }
    if lam.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::Numerical(format!(
            "allocation left its domain: {lam:?}"
        )));
    }
    Ok(lam)
}

/// Full per-stream allocation induced by target MSEs `lam_star`.
#[derive(Debug, Clone)]
pub struct Allocation {
    /// Per-stream MSEs, each in (0, 1].
    pub lam: Vec<f64>,
    /// Source-side SNR factors.
    pub a: Vec<f64>,
    /// Relay-side SNR factors.
    pub b: Vec<f64>,
    /// Source precoder eigenvalues `rho * A / lam_h1`.
    pub lam_u: Vec<f64>,
    /// Relay amplifier eigenvalues `B / (lam_h2 (A + 1))`.
    pub lam_f: Vec<f64>,
    /// Total transmit power, source plus relay.
    pub total_power: f64,
}

/// Expands target MSEs into the eigen-domain allocation and its power,
/// reading hop gains from a channel decomposition.
///
/// See [`allocation_from_gains`] for the feasibility contract.
pub fn allocation_from_lambda(
    lam_star: &[f64],
    eigen: &ChannelEigen,
    rho: f64,
    qos: &QosVector,
) -> Result<Allocation> {
    allocation_from_gains(lam_star, &eigen.lam_h1, &eigen.lam_h2, rho, qos)
}

/// Expands target MSEs into the eigen-domain allocation and its power.
///
/// `lam_star` must be feasible for `qos`: entries in (0, 1], non-decreasing
/// (tolerance 1e-12), prefix sums within 1e-9 of the target prefix sums.
pub fn allocation_from_gains(
    lam_star: &[f64],
    lam_h1: &[f64],
    lam_h2: &[f64],
    rho: f64,
    qos: &QosVector,
) -> Result<Allocation> {
    let k = qos.k();
    if lam_star.len() != k || lam_h1.len() != k || lam_h2.len() != k {
        return Err(Error::invalid(format!(
            "length mismatch: {} MSEs, {} / {} gains, {} targets",
            lam_star.len(),
            lam_h1.len(),
            lam_h2.len(),
            k
        )));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    for (i, &l) in lam_star.iter().enumerate() {
        if !(l.is_finite() && l > 0.0 && l <= 1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "stream {i} MSE must lie in (0, 1], got {l}"
            )));
        }
    }
    if lam_star.windows(2).any(|p| p[1] < p[0] - 1e-12) {
        return Err(Error::domain(format!(
            "stream MSEs must be non-decreasing, got {lam_star:?}"
        )));
    }
    let caps = qos.prefix_sums();
    let mut acc = 0.0;
    for (j, (&l, cap)) in lam_star.iter().zip(&caps).enumerate() {
        acc += l.min(1.0);
        if acc > cap + 1e-9 {
            return Err(Error::Infeasible {
                index: j + 1,
                violation: acc - cap,
            });
        }
    }
    let mut alloc = Allocation {
        lam: Vec::with_capacity(k),
        a: Vec::with_capacity(k),
        b: Vec::with_capacity(k),
        lam_u: Vec::with_capacity(k),
        lam_f: Vec::with_capacity(k),
        total_power: 0.0,
    };
    for n in 0..k {
        let lam = lam_star[n].min(1.0);
        let (a, b) = ab_from_lambda(lam, lam_h1[n], lam_h2[n])?;
        alloc.lam.push(lam);
        alloc.a.push(a);
        alloc.b.push(b);
        alloc.lam_u.push(rho * a / lam_h1[n]);
        alloc.lam_f.push(b / (lam_h2[n] * (a + 1.0)));
        alloc.total_power += rho * (a / lam_h1[n] + b / lam_h2[n]);
    }
    Ok(alloc)
}

/// Exact power curves as a separable objective (for oracle certification).
pub struct PowerCurves {
    gamma: Vec<f64>,
    scale: Vec<f64>,
}

impl PowerCurves {
    pub fn from_profile(profile: &StreamProfile) -> Self {
        PowerCurves {
            gamma: profile.gamma.clone(),
            scale: profile.scale.clone(),
        }
    }
}

impl SeparableObjective for PowerCurves {
    fn dim(&self) -> usize {
        self.gamma.len()
    }
    fn value(&self, n: usize, x: f64) -> f64 {
        p_value(x, self.gamma[n], self.scale[n])
    }
    fn deriv(&self, n: usize, x: f64) -> f64 {
        p_deriv(x, self.gamma[n], self.scale[n])
    }
    fn curvature(&self, n: usize, x: f64) -> f64 {
        p_second(x, self.gamma[n], self.scale[n])
    }
}

/// Surrogate objective `sum w_n / lam_n` as a separable objective.
pub struct HyperbolaCurves {
    pub w: Vec<f64>,
}

impl SeparableObjective for HyperbolaCurves {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn value(&self, n: usize, x: f64) -> f64 {
        self.w[n] / x.max(LAM_FLOOR)
    }
    fn deriv(&self, n: usize, x: f64) -> f64 {
        let x = x.max(LAM_FLOOR);
        -self.w[n] / (x * x)
    }
    fn curvature(&self, n: usize, x: f64) -> f64 {
        let x = x.max(LAM_FLOOR);
        2.0 * self.w[n] / (x * x * x)
    }
}

/// Piecewise convex underestimator of the power curves: the curve itself up
/// to the tangency point, then its tangent line (which ends at `(1, 0)`).
pub struct LinearBoundCurves {
    gamma: Vec<f64>,
    scale: Vec<f64>,
    beta: Vec<f64>,
    value_at_beta: Vec<f64>,
    slope_at_beta: Vec<f64>,
}

impl LinearBoundCurves {
    pub fn from_profile(profile: &StreamProfile) -> Self {
        LinearBoundCurves::with_scales(profile, profile.scale.clone())
    }

    fn with_scales(profile: &StreamProfile, scale: Vec<f64>) -> Self {
        let k = profile.k();
        let mut b = LinearBoundCurves {
            gamma: profile.gamma.clone(),
            scale,
            beta: profile.beta.clone(),
            value_at_beta: Vec::with_capacity(k),
            slope_at_beta: Vec::with_capacity(k),
        };
        for n in 0..k {
            b.value_at_beta
                .push(p_value(b.beta[n], b.gamma[n], b.scale[n]));
            b.slope_at_beta
                .push(p_deriv(b.beta[n], b.gamma[n], b.scale[n]));
        }
        b
    }
}

impl SeparableObjective for LinearBoundCurves {
    fn dim(&self) -> usize {
        self.gamma.len()
    }
    fn value(&self, n: usize, x: f64) -> f64 {
        if x <= self.beta[n] {
            p_value(x, self.gamma[n], self.scale[n])
        } else {
            self.value_at_beta[n] + self.slope_at_beta[n] * (x - self.beta[n])
        }
    }
    fn deriv(&self, n: usize, x: f64) -> f64 {
        if x <= self.beta[n] {
            p_deriv(x, self.gamma[n], self.scale[n])
        } else {
            self.slope_at_beta[n]
        }
    }
    fn curvature(&self, n: usize, x: f64) -> f64 {
        if x <= self.beta[n] {
            p_second(x, self.gamma[n], self.scale[n])
        } else {
            0.0
        }
    }
}

/// Minimizes the convex underestimator over the target set, producing a
/// certified lower bound on any feasible total power.
///
/// Returns the bound minimizer, its value, and solver diagnostics; fails
/// with [`Error::Convergence`] if the solver cannot reach its KKT target.
pub fn lower_bound_linear(profile: &StreamProfile, qos: &QosVector) -> Result<OracleResult> {
    if profile.k() != qos.k() {
        return Err(Error::invalid(format!(
            "profile has {} streams but QoS has {}",
            profile.k(),
            qos.k()
        )));
    }
    // Solve with rho divided out so the iterate path is invariant under
    // noise-level rescaling; restore the unit afterwards.
    let normalized: Vec<f64> = profile.scale.iter().map(|s| s / profile.rho).collect();
    let curves = LinearBoundCurves::with_scales(profile, normalized);
    let region = FeasibleRegion::lambda_region(qos);
    let cfg = SolverConfig::default();
    let mut res = convex_solve(&curves, &region, &cfg, Some(&qos.eta));
    if !res.converged {
        return Err(Error::Convergence {
            iterations: res.iterations,
            residual: res.kkt_residual,
            last_iterate: res.minimizer,
        });
    }
    res.value *= profile.rho;
    Ok(res)
}
