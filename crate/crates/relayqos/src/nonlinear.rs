//! Decision-feedback branch: the log-domain power curve, its closed-form
//! landmarks, the prefix-constrained allocation algorithm, and the convex
//! lower bound.
//!
//! With a feedback equalizer the per-stream MSE constraints multiply
//! instead of adding, so everything moves to `theta = ln lam` with targets
//! `kappa = ln eta`. The power curve becomes
//!
//! ```text
//! Q(theta) = scale * (gamma*(e^{-theta} - 1) + 2*sqrt(1 - e^theta)*e^{-theta})
//! ```
//!
//! which equals the Wiener-branch curve at `lam = e^theta` exactly. `Q` is
//! convex below `ln phi` and concave after; the allocator minimizes the
//! exponential surrogate `w * e^{-theta}` (exactly solvable by
//! [`solve_exponential`]), and [`lower_bound_nonlinear`] certifies it
//! against the convex underestimator that continues `Q` past the tangency
//! point `ln psi` along the tangent line through the origin.

use crate::channel::ChannelEigen;
use crate::error::{Error, Result};
use crate::linear::Allocation;
use crate::oracles::{
    convex_solve, FeasibleRegion, OracleResult, SeparableObjective, SolverConfig,
};
use crate::qos::StreamProfile;

/// Distance kept from the `theta = 0` endpoint when evaluating derivatives,
/// mirroring the Wiener-branch endpoint clamp.
const THETA_CLAMP: f64 = 1e-12;

/// Log-domain power curve value for clamped inputs.
pub(crate) fn q_value(theta: f64, gamma: f64, scale: f64) -> f64 {
    let theta = theta.min(0.0);
    let om = (-theta.exp_m1()).max(0.0);
    scale * (gamma * (-theta).exp_m1() + 2.0 * om.sqrt() * (-theta).exp())
}

/// First derivative of the log-domain power curve (negative everywhere).
pub(crate) fn q_deriv(theta: f64, gamma: f64, scale: f64) -> f64 {
    let lam = theta.exp().clamp(1e-300, 1.0 - THETA_CLAMP);
    let om = 1.0 - lam;
    -scale * (gamma + (2.0 - lam) / om.sqrt()) / lam
}

/// Second derivative of the log-domain power curve; changes sign at
/// `ln phi`.
pub(crate) fn q_second(theta: f64, gamma: f64, scale: f64) -> f64 {
    let lam = theta.exp().clamp(1e-300, 1.0 - THETA_CLAMP);
    let om = 1.0 - lam;
    let om32 = om * om.sqrt();
    scale * (lam * lam - 6.0 * lam + 4.0 + 2.0 * gamma * om32) / (2.0 * lam * om32)
}

/// Transmit power of a stream at log-MSE `theta`, equal to the linear
/// branch's power at `lam = e^theta`.
pub fn q_function(theta: f64, gamma: f64, scale: f64) -> Result<f64> {
    if !(theta.is_finite() && theta <= 0.0) {
        return Err(Error::domain(format!(
            "log-MSE must be non-positive, got {theta}"
        )));
    }
    if !(gamma.is_finite() && gamma >= 2.0 - 1e-12 && scale.is_finite() && scale > 0.0) {
        return Err(Error::domain(format!(
            "need gamma >= 2 and positive scale, got ({gamma}, {scale})"
        )));
    }
    Ok(q_value(theta, gamma.max(2.0), scale))
}

fn validate_gamma(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 2.0 - 1e-12) {
        return Err(Error::domain(format!(
            "gain-imbalance factor must be at least 2, got {gamma}"
        )));
    }
    Ok(gamma.max(2.0))
}

/// Inflection abscissa of the log-domain curve: the unique root in (0, 1]
/// of `lam^2 - 6 lam + 4 = -2 gamma (1 - lam)^{3/2}`, in [2(sqrt(2)-1), 1).
///
/// `Q` is convex for `theta <= ln phi` and concave after. Uses the closed
/// form of the associated quartic, returning the balanced-gain limit
/// `2(sqrt(2) - 1)` exactly when `gamma^2 - 4 < 1e-9`, plus a Newton step
/// to hold the residual at the floating-point floor.
pub fn inflection_phi(gamma: f64) -> Result<f64> {
    let gamma = validate_gamma(gamma)?;
    let phi_min = 2.0 * (std::f64::consts::SQRT_2 - 1.0);
    if gamma * gamma - 4.0 < 1e-9 {
        return Ok(phi_min);
    }
    let t = 27.0 * gamma * gamma - 104.0;
    let s = (t * t - 16.0).max(0.0).sqrt();
    let chi = 8.0 / 3.0 + 2f64.cbrt() / 3.0 * ((t + s).cbrt() + (t - s).cbrt());
    let sq = chi.sqrt();
    let inner = (gamma * sq + 5.0 - gamma * gamma / chi).max(0.0);
    let mut phi = 1.0 - 1.0 / (2.0 + gamma / sq + inner.sqrt());
    for _ in 0..3 {
        let om = (1.0 - phi).max(0.0);
        let u = phi * phi - 6.0 * phi + 4.0 + 2.0 * gamma * om * om.sqrt();
        let up = 2.0 * phi - 6.0 - 3.0 * gamma * om.sqrt();
        phi -= u / up;
    }
    if !(phi.is_finite() && (phi_min - 1e-9..1.0).contains(&phi)) {
        return Err(Error::Numerical(format!(
            "log-domain inflection left its range: {phi} at gamma {gamma}"
        )));
    }
    Ok(phi.max(phi_min))
}

/// Tangency abscissa of the log-domain underestimator: the unique root in
/// (0, 1) of
///
/// ```text
/// gamma*sqrt(1-psi) + 2 + (ln psi / sqrt(1-psi)) * (gamma + (2-psi)/sqrt(1-psi)) = 0
/// ```
///
/// The tangent of `Q` at `ln psi` passes through the origin, so the
/// piecewise bound is tight at `theta = 0`. The equation has no closed
/// form; it is solved by bisection after a sign-change scan certifying
/// the root is unique in the bracket.
pub fn tangent_psi(gamma: f64) -> Result<f64> {
    let gamma = validate_gamma(gamma)?;
    let g = |psi: f64| {
        let om = 1.0 - psi;
        let sq = om.sqrt();
        gamma * sq + 2.0 + psi.ln() / sq * (gamma + (2.0 - psi) / sq)
    };
    // The function runs to -inf at 0+ and to +1 at 1-; certify a single
    // crossing on a mixed log/uniform scan before bisecting.
    let mut grid = Vec::with_capacity(800);
    for i in 0..400 {
        grid.push(10f64.powf(-12.0 + 12.0 * i as f64 / 400.0));
    }
    for i in 0..400 {
        grid.push(1e-3 + (1.0 - 1e-9 - 1e-3) * i as f64 / 399.0);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut crossings = Vec::new();
    for pair in grid.windows(2) {
        if g(pair[0]) < 0.0 && g(pair[1]) >= 0.0 {
            crossings.push((pair[0], pair[1]));
        }
    }
    let (mut lo, mut hi) = match crossings[..] {
        [only] => only,
        _ => {
            return Err(Error::Numerical(format!(
                "tangency scan found {} sign changes at gamma {gamma}",
                crossings.len()
            )))
        }
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let psi = 0.5 * (lo + hi);
    if g(psi).abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "tangency residual stayed at {} for gamma {gamma}",
            g(psi)
        )));
    }
    Ok(psi)
}

/// Surrogate objective value sum `w_n * e^{-theta_n}`.
pub fn exp_objective(w: &[f64], theta: &[f64]) -> f64 {
    w.iter().zip(theta).map(|(w, t)| w * (-t).exp()).sum()
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

fn validate_kappa(kappa: &[f64]) -> Result<()> {
    if kappa.is_empty() {
        return Err(Error::invalid("need at least one log-domain target"));
    }
    for (i, &ki) in kappa.iter().enumerate() {
        if !(ki.is_finite() && ki <= 1e-12) {
            return Err(Error::invalid(format!(
                "log target {i} must be non-positive and finite, got {ki}"
            )));
        }
    }
    if kappa.windows(2).any(|p| p[1] < p[0] - 1e-12) {
        return Err(Error::invalid(format!(
            "log targets must be non-decreasing, got {kappa:?}"
        )));
    }
    Ok(())
}

/// Exact minimizer of `sum w_n e^{-theta_n}` over the log-domain target
/// set: partial sums of `theta` capped by partial sums of `kappa`, each
/// entry non-positive.
///
/// The multiplicative analogue of the Wiener-branch allocator: streams are
/// processed from the weakest down, each clamped at the silent point
/// `theta = 0`, with unused log-mass folded into the next prefix.
pub fn solve_exponential(w: &[f64], kappa: &[f64]) -> Result<Vec<f64>> {
    let k = kappa.len();
    validate_kappa(kappa)?;
    validate_weights(w, k)?;
    if let Some(order) = stable_order(w) {
        let sorted: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        let theta_sorted = solve_exponential_sorted(&sorted, kappa)?;
        let mut theta = vec![0.0; k];
        for (pos, &i) in order.iter().enumerate() {
            theta[i] = theta_sorted[pos];
        }
        return Ok(theta);
    }
    solve_exponential_sorted(w, kappa)
}

fn stable_order(w: &[f64]) -> Option<Vec<usize>> {
    if w.windows(2).all(|p| p[1] >= p[0]) {
        return None;
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
    Some(order)
}

fn solve_exponential_sorted(w: &[f64], kappa: &[f64]) -> Result<Vec<f64>> {
    let k = kappa.len();
    // delta[j] = log capacity of the first j streams; delta[0] = 0.
    let mut delta = Vec::with_capacity(k + 1);
    delta.push(0.0);
    for &ki in kappa {
        delta.push(delta.last().unwrap() + ki);
    }
    // log_prefix[j] = sum of ln w over the first j streams.
    let mut log_prefix = Vec::with_capacity(k + 1);
    log_prefix.push(0.0);
    for &wi in w {
        log_prefix.push(log_prefix.last().unwrap() + wi.ln());
    }
    let mut theta = vec![0.0; k];
    for m in (1..=k).rev() {
        let mut best = f64::NEG_INFINITY;
        for l in 0..m {
            let cand = (delta[m] - delta[l] - (log_prefix[m] - log_prefix[l])) / (m - l) as f64;
            if cand > best {
                best = cand;
            }
        }
        let theta_m = (w[m - 1].ln() + best).min(0.0);
        theta[m - 1] = theta_m;
        delta[m - 1] = delta[m] - theta_m;
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numerical(format!(
            "log allocation left its domain: {theta:?}"
        )));
    }
    Ok(theta)
}

/// Full per-stream allocation induced by log-MSE targets `theta_star`.
///
/// Same content as [`Allocation`] with the log-domain entries kept
/// alongside their exponentials.
#[derive(Debug, Clone)]
pub struct ThetaAllocation {
    /// Per-stream log-MSEs, each non-positive.
    pub theta: Vec<f64>,
    /// Per-stream MSEs, `exp(theta)` elementwise.
    pub lam: Vec<f64>,
    /// Source-side SNR factors.
    pub a: Vec<f64>,
    /// Relay-side SNR factors.
    pub b: Vec<f64>,
    /// Source precoder eigenvalues.
    pub lam_u: Vec<f64>,
    /// Relay amplifier eigenvalues.
    pub lam_f: Vec<f64>,
    /// Total transmit power, source plus relay.
    pub total_power: f64,
}

/// Expands log-MSE targets into the eigen-domain allocation, reading hop
/// gains from a channel decomposition.
pub fn allocation_from_theta(
    theta_star: &[f64],
    eigen: &ChannelEigen,
    rho: f64,
    kappa: &[f64],
) -> Result<ThetaAllocation> {
    allocation_from_theta_gains(theta_star, &eigen.lam_h1, &eigen.lam_h2, rho, kappa)
}

/// Expands log-MSE targets into the eigen-domain allocation and its power.
///
/// `theta_star` must be feasible for `kappa`: entries non-positive,
/// non-decreasing (tolerance 1e-12), prefix sums within 1e-9 of the target
/// log prefix sums.
pub fn allocation_from_theta_gains(
    theta_star: &[f64],
    lam_h1: &[f64],
    lam_h2: &[f64],
    rho: f64,
    kappa: &[f64],
) -> Result<ThetaAllocation> {
    let k = kappa.len();
    validate_kappa(kappa)?;
    if theta_star.len() != k || lam_h1.len() != k || lam_h2.len() != k {
        return Err(Error::invalid(format!(
            "length mismatch: {} log-MSEs, {} / {} gains, {} targets",
            theta_star.len(),
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
    for (i, &t) in theta_star.iter().enumerate() {
        if !(t.is_finite() && t <= 1e-12) {
            return Err(Error::domain(format!(
                "stream {i} log-MSE must be non-positive, got {t}"
            )));
        }
    }
    if theta_star.windows(2).any(|p| p[1] < p[0] - 1e-12) {
        return Err(Error::domain(format!(
            "stream log-MSEs must be non-decreasing, got {theta_star:?}"
        )));
    }
    let mut cap = 0.0;
    let mut acc = 0.0;
    for (j, (&t, &ki)) in theta_star.iter().zip(kappa).enumerate() {
        acc += t.min(0.0);
        cap += ki;
        if acc > cap + 1e-9 {
            return Err(Error::Infeasible {
                index: j + 1,
                violation: acc - cap,
            });
        }
    }
    let mut out = ThetaAllocation {
        theta: Vec::with_capacity(k),
        lam: Vec::with_capacity(k),
        a: Vec::with_capacity(k),
        b: Vec::with_capacity(k),
        lam_u: Vec::with_capacity(k),
        lam_f: Vec::with_capacity(k),
        total_power: 0.0,
    };
    for n in 0..k {
        let theta = theta_star[n].min(0.0);
        let lam = theta.exp().min(1.0);
        let (a, b) = crate::linear::ab_from_lambda(lam, lam_h1[n], lam_h2[n])?;
        out.theta.push(theta);
        out.lam.push(lam);
        out.a.push(a);
        out.b.push(b);
        out.lam_u.push(rho * a / lam_h1[n]);
        out.lam_f.push(b / (lam_h2[n] * (a + 1.0)));
        out.total_power += rho * (a / lam_h1[n] + b / lam_h2[n]);
    }
    Ok(out)
}

impl ThetaAllocation {
    /// View as the linear-branch allocation struct (drops `theta`).
    pub fn as_allocation(&self) -> Allocation {
        Allocation {
            lam: self.lam.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            lam_u: self.lam_u.clone(),
            lam_f: self.lam_f.clone(),
            total_power: self.total_power,
        }
    }
}

/// Exact log-domain power curves as a separable objective.
pub struct LogPowerCurves {
    gamma: Vec<f64>,
    scale: Vec<f64>,
}

impl LogPowerCurves {
    pub fn from_profile(profile: &StreamProfile) -> Self {
        LogPowerCurves {
            gamma: profile.gamma.clone(),
            scale: profile.scale.clone(),
        }
    }
}

impl SeparableObjective for LogPowerCurves {
    fn dim(&self) -> usize {
        self.gamma.len()
    }
    fn value(&self, n: usize, x: f64) -> f64 {
        q_value(x, self.gamma[n], self.scale[n])
    }
    fn deriv(&self, n: usize, x: f64) -> f64 {
        q_deriv(x, self.gamma[n], self.scale[n])
    }
    fn curvature(&self, n: usize, x: f64) -> f64 {
        q_second(x, self.gamma[n], self.scale[n])
    }
}

/// Surrogate objective `sum w_n e^{-theta_n}` as a separable objective.
pub struct ExpCurves {
    pub w: Vec<f64>,
}

impl SeparableObjective for ExpCurves {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn value(&self, n: usize, x: f64) -> f64 {
        self.w[n] * (-x.max(-700.0)).exp()
    }
    fn deriv(&self, n: usize, x: f64) -> f64 {
        -self.w[n] * (-x.max(-700.0)).exp()
    }
    fn curvature(&self, n: usize, x: f64) -> f64 {
        self.w[n] * (-x.max(-700.0)).exp()
    }
}

/// Piecewise convex underestimator of the log-domain curves: the curve up
/// to the tangency point `ln psi`, then the tangent line through the
/// origin.
pub struct LogBoundCurves {
    gamma: Vec<f64>,
    scale: Vec<f64>,
    ln_psi: Vec<f64>,
    value_at_psi: Vec<f64>,
    slope_at_psi: Vec<f64>,
}

impl LogBoundCurves {
    pub fn from_profile(profile: &StreamProfile) -> Self {
        LogBoundCurves::with_scales(profile, profile.scale.clone())
    }

    fn with_scales(profile: &StreamProfile, scale: Vec<f64>) -> Self {
        let k = profile.k();
        let mut b = LogBoundCurves {
            gamma: profile.gamma.clone(),
            scale,
            ln_psi: profile.psi.iter().map(|p| p.ln()).collect(),
            value_at_psi: Vec::with_capacity(k),
            slope_at_psi: Vec::with_capacity(k),
        };
        for n in 0..k {
            b.value_at_psi
                .push(q_value(b.ln_psi[n], b.gamma[n], b.scale[n]));
            b.slope_at_psi
                .push(q_deriv(b.ln_psi[n], b.gamma[n], b.scale[n]));
        }
        b
    }
}

impl SeparableObjective for LogBoundCurves {
    fn dim(&self) -> usize {
        self.gamma.len()
    }
    fn value(&self, n: usize, x: f64) -> f64 {
        if x <= self.ln_psi[n] {
            q_value(x, self.gamma[n], self.scale[n])
        } else {
            self.value_at_psi[n] + self.slope_at_psi[n] * (x - self.ln_psi[n])
        }
    }
    fn deriv(&self, n: usize, x: f64) -> f64 {
        if x <= self.ln_psi[n] {
            q_deriv(x, self.gamma[n], self.scale[n])
        } else {
            self.slope_at_psi[n]
        }
    }
    fn curvature(&self, n: usize, x: f64) -> f64 {
        if x <= self.ln_psi[n] {
            q_second(x, self.gamma[n], self.scale[n])
        } else {
            0.0
        }
    }
}

/// Minimizes the log-domain convex underestimator over the target set,
/// producing a certified lower bound on any feasible total power.
pub fn lower_bound_nonlinear(profile: &StreamProfile, kappa: &[f64]) -> Result<OracleResult> {
    validate_kappa(kappa)?;
    if profile.k() != kappa.len() {
        return Err(Error::invalid(format!(
            "profile has {} streams but {} log targets given",
            profile.k(),
            kappa.len()
        )));
    }
    let normalized: Vec<f64> = profile.scale.iter().map(|s| s / profile.rho).collect();
    let curves = LogBoundCurves::with_scales(profile, normalized);
    let region = FeasibleRegion::theta_region(kappa);
    let cfg = SolverConfig::default();
    let mut res = convex_solve(&curves, &region, &cfg, Some(kappa));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qos::QosVector;
    use proptest::prelude::*;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn q_matches_linear_curve_at_frozen_points() {
        assert_eq!(q_function(0.0, 2.0, 1.0).unwrap(), 0.0);
        let q = q_function(0.5f64.ln(), 2.0, 1.0).unwrap();
        assert!(
            (q - (2.0 + 2.0 * SQRT_2)).abs() < 1e-12,
            "Q(ln 1/2) should be 2 + 2*sqrt(2), got {q}"
        );
        assert!(
            q_function(0.1, 2.0, 1.0).is_err(),
            "positive log-MSE must fail"
        );
    }

    #[test]
    fn q_derivatives_match_finite_differences() {
        let h = 1e-6;
        for &gamma in &[2.0, 3.7] {
            for i in 1..30 {
                let theta = -3.0 * i as f64 / 30.0;
                let fd1 =
                    (q_value(theta + h, gamma, 1.0) - q_value(theta - h, gamma, 1.0)) / (2.0 * h);
                let an1 = q_deriv(theta, gamma, 1.0);
                assert!(
                    (fd1 - an1).abs() <= 1e-5 * an1.abs(),
                    "first derivative off at theta={theta}: {an1} vs {fd1}"
                );
                let fd2 =
                    (q_deriv(theta + h, gamma, 1.0) - q_deriv(theta - h, gamma, 1.0)) / (2.0 * h);
                let an2 = q_second(theta, gamma, 1.0);
                assert!(
                    (fd2 - an2).abs() <= 1e-4 * an2.abs().max(1.0),
                    "second derivative off at theta={theta}: {an2} vs {fd2}"
                );
            }
        }
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut flo = f(lo);
        assert!(
            flo * f(hi) < 0.0,
            "bracket must change sign on [{lo}, {hi}]"
        );
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inflection_phi_matches_independent_bisection() {
        let phi_min = 2.0 * (SQRT_2 - 1.0);
        assert_eq!(inflection_phi(2.0).unwrap(), phi_min);
        let mut prev = phi_min;
        for &gamma in &[2.001, 2.1, 2.5, 3.0, 5.0, 10.0, 25.0, 50.0] {
            let phi = inflection_phi(gamma).unwrap();
            let oracle = bisect(
                |p| p * p - 6.0 * p + 4.0 + 2.0 * gamma * (1.0 - p).powf(1.5),
                1e-6,
                1.0 - 1e-12,
            );
            assert!(
                (phi - oracle).abs() < 1e-9,
                "phi({gamma}) = {phi} disagrees with bisection {oracle}"
            );
            assert!(phi >= prev - 1e-12, "phi must be non-decreasing in gamma");
            assert!((phi_min..1.0).contains(&phi));
            prev = phi;
        }
        // Frozen fixture.
        let phi3 = inflection_phi(3.0).unwrap();
        assert!(
            (phi3 - 0.846_295_971_515_505).abs() < 1e-12,
            "phi(3) regression moved: {phi3}"
        );
        // Branch continuity at the switch.
        let gamma = (4.0 + 1.1e-9f64).sqrt();
        let phi = inflection_phi(gamma).unwrap();
        assert!(
            (phi - phi_min).abs() < 1e-6,
            "branches disagree near the switch: {phi}"
        );
    }

    #[test]
    fn tangent_psi_frozen_and_tangency() {
        let psi2 = tangent_psi(2.0).unwrap();
        assert!(
            (psi2 - 0.633_339_929_566_333_6).abs() < 1e-12,
            "psi(2) regression moved: {psi2}"
        );
        for &gamma in &[2.0, 2.5, 3.0, 5.0, 10.0, 50.0] {
            let psi = tangent_psi(gamma).unwrap();
            // Tangent through the origin: Q'(ln psi) * ln psi = Q(ln psi).
            let lhs = q_deriv(psi.ln(), gamma, 1.0) * psi.ln();
            let rhs = q_value(psi.ln(), gamma, 1.0);
            assert!(
                (lhs - rhs).abs() < 1e-8 * rhs.max(1.0),
                "tangency identity off at gamma {gamma}: {lhs} vs {rhs}"
            );
            let phi = inflection_phi(gamma).unwrap();
            assert!(psi < phi, "tangency must sit inside the convex region");
        }
    }

    #[test]
    fn solve_exponential_worked_example() {
        let kappa = [-1.0, -1.0];
        let w = [1.0, std::f64::consts::E.powi(2)];
        let theta = solve_exponential(&w, &kappa).unwrap();
        assert!(
            (theta[0] + 2.0).abs() < 1e-12,
            "theta_1 should be -2, got {}",
            theta[0]
        );
        assert_eq!(theta[1], 0.0, "theta_2 should clamp at the silent point");
        let obj = exp_objective(&w, &theta);
        let expect = 2.0 * std::f64::consts::E.powi(2);
        assert!(
            (obj - expect).abs() < 1e-12,
            "objective should be 2e^2, got {obj}"
        );
    }

    #[test]
    fn solve_exponential_single_and_symmetric() {
        let theta = solve_exponential(&[5.0], &[0.7f64.ln()]).unwrap();
        assert_eq!(theta, vec![0.7f64.ln()]);
        let kappa = [0.4f64.ln(); 3];
        let theta = solve_exponential(&[2.0; 3], &kappa).unwrap();
        for &t in &theta {
            assert!(
                (t - 0.4f64.ln()).abs() < 1e-12,
                "equal weights and targets should split evenly, got {theta:?}"
            );
        }
    }

    #[test]
    fn allocations_agree_across_domains() {
        let qos = QosVector::new(vec![0.2, 0.4, 0.9]).unwrap();
        let theta = solve_exponential(&[1.0, 2.0, 5.0], &qos.kappa).unwrap();
        let lam: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let (l1, l2) = (vec![3.0, 2.0, 1.0], vec![2.5, 1.0, 0.5]);
        let from_theta = allocation_from_theta_gains(&theta, &l1, &l2, 1.3, &qos.kappa).unwrap();
        // The lambda-domain feasibility region differs, so compare against
        // the shared SNR-split mapping directly.
        for n in 0..3 {
            let (a, b) = crate::linear::ab_from_lambda(lam[n], l1[n], l2[n]).unwrap();
            assert!((from_theta.a[n] - a).abs() <= 1e-12 * a.max(1.0));
            assert!((from_theta.b[n] - b).abs() <= 1e-12 * b.max(1.0));
            assert!((from_theta.lam[n] - lam[n]).abs() <= 1e-15);
        }
        let direct: f64 = (0..3)
            .map(|n| crate::linear::per_stream_power(lam[n], l1[n], l2[n], 1.3).unwrap())
            .sum();
        assert!(
            (from_theta.total_power - direct).abs() <= 1e-9 * direct,
            "power accounting mismatch: {} vs {direct}",
            from_theta.total_power
        );
    }

    #[test]
    fn theta_allocation_checks_feasibility() {
        let kappa = [0.5f64.ln(), 0.5f64.ln()];
        let err = allocation_from_theta_gains(
            &[0.6f64.ln(), 0.6f64.ln()],
            &[1.0, 1.0],
            &[1.0, 1.0],
            1.0,
            &kappa,
        );
        match err {
            Err(Error::Infeasible { index, violation }) => {
                assert_eq!(index, 1);
                let expected = 0.6f64.ln() - 0.5f64.ln();
                assert!(
                    (violation - expected).abs() < 1e-12,
                    "violation should be the log-target overshoot, got {violation}"
                );
            }
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn log_domain_lower_bound_matches_the_curve_below_the_tangent_point() {
        // Balanced single stream with target 1/2, below the tangent
        // abscissa near 0.6333: the bound equals the exact power.
        let kappa = [0.5f64.ln()];
        let profile = StreamProfile::from_gains(&[1.0], &[1.0], 1.0).unwrap();
        let res = lower_bound_nonlinear(&profile, &kappa).unwrap();
        assert!(res.converged);
        let expect = 2.0 + 2.0 * std::f64::consts::SQRT_2;
        assert!(
            (res.value - expect).abs() < 1e-9,
            "bound should equal the exact single-stream power, got {}",
            res.value
        );
        assert!(
            (res.minimizer[0] - kappa[0]).abs() < 1e-9,
            "the log cap must bind at the optimum, got {}",
            res.minimizer[0]
        );
    }

    #[test]
    fn log_domain_lower_bound_switches_to_the_tangent_for_loose_targets() {
        // A target of 0.9 sits beyond the tangent abscissa; the bound is
        // the chord through the origin evaluated at ln(0.9).
        let kappa = [0.9f64.ln()];
        let profile = StreamProfile::from_gains(&[1.0], &[1.0], 1.0).unwrap();
        let res = lower_bound_nonlinear(&profile, &kappa).unwrap();
        assert!(res.converged);
        let ln_psi = tangent_psi(2.0).unwrap().ln();
        let slope = q_deriv(ln_psi, 2.0, 1.0);
        let expect = slope * kappa[0];
        assert!(
            (res.value - expect).abs() < 1e-8 * expect,
            "tangent-region bound should be {expect}, got {}",
            res.value
        );
        let true_power = q_value(kappa[0], 2.0, 1.0);
        assert!(
            true_power > res.value,
            "the bound must stay below the curve: {} vs {}",
            true_power,
            res.value
        );
    }

    #[test]
    fn log_domain_lower_bound_scales_exactly_with_the_noise_level() {
        let kappa = [0.3f64.ln(), 0.6f64.ln()];
        let base = StreamProfile::from_gains(&[2.0, 1.0], &[1.5, 0.8], 1.0).unwrap();
        let scaled = StreamProfile::from_gains(&[2.0, 1.0], &[1.5, 0.8], 50.0).unwrap();
        let lb1 = lower_bound_nonlinear(&base, &kappa).unwrap();
        let lb2 = lower_bound_nonlinear(&scaled, &kappa).unwrap();
        assert!(
            (lb2.value / lb1.value - 50.0).abs() < 1e-9 * 50.0,
            "bound must scale linearly with rho: {} vs {}",
            lb1.value,
            lb2.value
        );
        for (a, b) in lb1.minimizer.iter().zip(&lb2.minimizer) {
            assert!(
                (a - b).abs() < 1e-10,
                "minimizer must not depend on rho: {a} vs {b}"
            );
        }
    }

    proptest! {
        #[test]
        fn q_equals_p_after_change_of_variables(
            theta in -20.0f64..0.0,
            gamma in 2.0f64..50.0,
            scale in 1e-3f64..1e3,
        ) {
            let q = q_value(theta, gamma, scale);
            let p = crate::linear::p_value(theta.exp(), gamma, scale);
            prop_assert!(
                (q - p).abs() <= 1e-12 * p.max(1e-300),
                "change of variables broke: {} vs {}", q, p
            );
        }

        #[test]
        fn solve_exponential_feasible_ordered_exhausts_mass(
            raw_w in proptest::collection::vec(0.01f64..100.0, 1..8),
            raw_eta in proptest::collection::vec(0.01f64..1.0, 1..8),
        ) {
            let k = raw_w.len().min(raw_eta.len());
            let mut w = raw_w[..k].to_vec();
            w.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut eta = raw_eta[..k].to_vec();
            eta.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let kappa: Vec<f64> = eta.iter().map(|e| e.ln()).collect();
            let theta = solve_exponential(&w, &kappa).unwrap();
            let total_kappa: f64 = kappa.iter().sum();
            let mut acc = 0.0;
            let mut cap = 0.0;
            for n in 0..k {
                if n > 0 {
                    prop_assert!(theta[n] >= theta[n - 1] - 1e-12, "ordering violated: {:?}", theta);
                }
                prop_assert!(theta[n] <= 0.0, "positive log-MSE in {:?}", theta);
                prop_assert!(
                    theta[n] >= total_kappa - 1e-9,
                    "no component may undershoot the total log mass"
                );
                acc += theta[n];
                cap += kappa[n];
                prop_assert!(acc <= cap + 1e-9, "prefix {} violated", n);
            }
            // The full log mass is always consumed (telescoping fold).
            prop_assert!(
                (acc - cap).abs() <= 1e-9,
                "log mass not exhausted: {} vs {}", acc, cap
            );
            // No worse than the trivial feasible point theta = kappa.
            let obj = exp_objective(&w, &theta);
            let at_kappa = exp_objective(&w, &kappa);
            prop_assert!(obj <= at_kappa * (1.0 + 1e-9));
        }
    }
}
