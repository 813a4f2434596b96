//! Alternating refinement of the source and relay power splits.
//!
//! Holding the relay side fixed, the per-stream MSE eigenvalue is a
//! one-to-one convex function of the source-side load, so minimizing the
//! source power under the QoS caps is a convex subproblem (and the same
//! holds with the roles swapped). Alternating the two subproblems can
//! only lower the total power, which makes the iteration a useful
//! independent check on the closed-form allocator: it starts from that
//! allocator's answer and reports how much slack it finds.

use crate::channel::ChannelEigen;
use crate::error::{Error, Result};
use crate::linear::{ab_from_lambda, hyperbola_coeffs, solve_hyperbola, Allocation};
use crate::qos::QosVector;

use super::{convex_solve, FeasibleRegion, SeparableObjective, SolverConfig};

/// A stream whose partner-side load falls below this is treated as
/// silent: its eigenvalue is pinned to one and it draws no power.
const SILENT_TOL: f64 = 1e-12;

/// Maximum number of full sweeps (one source update plus one relay
/// update each).
const MAX_SWEEPS: usize = 200;

/// Relative improvement under which the iteration is declared stationary.
const IMPROVE_TOL: f64 = 1e-10;

/// Outcome of the alternating refinement.
#[derive(Debug, Clone)]
pub struct AlternatingRun {
    /// Final power split, built from the iteration's own loads.
    pub allocation: Allocation,
    /// Total power after the start and after every half-step; never
    /// increasing.
    pub objective_trace: Vec<f64>,
    /// Number of full sweeps performed.
    pub sweeps: usize,
    /// Whether the trace flattened out before the sweep budget ran out.
    pub converged: bool,
}

/// Runs the refinement on a decomposed channel.
pub fn alternating_ab(
    eigen: &ChannelEigen,
    qos: &QosVector,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<AlternatingRun> {
    alternating_from_gains(&eigen.lam_h1, &eigen.lam_h2, qos, rho, cfg)
}

/// Same as [`alternating_ab`] but starting from raw subchannel gains,
/// which must be positive and sorted strongest first.
pub fn alternating_from_gains(
    lam_h1: &[f64],
    lam_h2: &[f64],
    qos: &QosVector,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<AlternatingRun> {
    let k = qos.k();
    if lam_h1.len() != k || lam_h2.len() != k {
        return Err(Error::invalid(
            "gain vectors must match the QoS stream count",
        ));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid("noise level rho must be positive"));
    }
    for (&l1, &l2) in lam_h1.iter().zip(lam_h2) {
        if !(l1.is_finite() && l1 > 0.0 && l2.is_finite() && l2 > 0.0) {
            return Err(Error::invalid("subchannel gains must be positive"));
        }
    }

    // Start from the closed-form allocation; every later step can only
    // improve on it. The whole iteration runs at unit noise: neither the
    // subproblems nor the starting loads depend on the noise level, so
    // normalizing it out keeps every stopping decision (and therefore
    // the iterate path) identical across noise scales, and the power is
    // rescaled at the end.
    let mut w = Vec::with_capacity(k);
    for (&l1, &l2) in lam_h1.iter().zip(lam_h2) {
        let (wn, _) = hyperbola_coeffs(l1, l2, 1.0)?;
        w.push(wn);
    }
    let mut lam = solve_hyperbola(&w, qos)?;
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    for n in 0..k {
        let (an, bn) = ab_from_lambda(lam[n], lam_h1[n], lam_h2[n])?;
        a[n] = an;
        b[n] = bn;
    }

    let unit_total = |a: &[f64], b: &[f64]| -> f64 {
        let mut sum = 0.0;
        for n in 0..k {
            sum += a[n] / lam_h1[n] + b[n] / lam_h2[n];
        }
        sum
    };

    let mut trace = vec![unit_total(&a, &b)];
    let mut converged = false;
    let mut sweeps = 0;
    'sweeps: for _ in 0..MAX_SWEEPS {
        sweeps += 1;
        for side in 0..2 {
            let (own_gains, own, other) = if side == 0 {
                (lam_h1, &mut a, &b)
            } else {
                (lam_h2, &mut b, &a)
            };
            let prev = *trace.last().expect("trace is never empty");
            let (new_lam, new_own) = half_step(own_gains, other, &lam, qos, cfg)?;
            let mut cand_a = new_own.clone();
            let mut cand_b = other.to_vec();
            if side == 1 {
                std::mem::swap(&mut cand_a, &mut cand_b);
            }
            let cand_total = unit_total(&cand_a, &cand_b);
            if cand_total > prev - IMPROVE_TOL * prev.max(1.0) {
                // No measurable progress on this half-step; the point is
                // stationary for the alternation.
                converged = true;
                break 'sweeps;
            }
            lam = new_lam;
            *own = new_own;
            trace.push(cand_total);
        }
    }
    if !converged {
        // Sweep budget exhausted; accept the point anyway if the last
        // full sweep barely moved.
        let last = *trace.last().expect("trace is never empty");
        let first = trace[trace.len().saturating_sub(3)];
        converged = first - last <= 1e-8 * first.max(1.0);
    }

    let mut lam_u = vec![0.0; k];
    let mut lam_f = vec![0.0; k];
    for n in 0..k {
        lam_u[n] = rho * a[n] / lam_h1[n];
        lam_f[n] = b[n] / (lam_h2[n] * (a[n] + 1.0));
    }
    let total_power = rho * unit_total(&a, &b);
    Ok(AlternatingRun {
        allocation: Allocation {
            lam,
            a,
            b,
            lam_u,
            lam_f,
            total_power,
        },
        objective_trace: trace.iter().map(|t| rho * t).collect(),
        sweeps,
        converged,
    })
}

/// One convex subproblem: with the partner-side loads fixed, choose the
/// eigenvalues (equivalently this side's loads) minimizing this side's
/// power under the QoS caps.
fn half_step(
    own_gains: &[f64],
    other: &[f64],
    lam: &[f64],
    qos: &QosVector,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = own_gains.len();
    let pinned: Vec<bool> = other.iter().map(|&o| o < SILENT_TOL).collect();
    let mut lo = vec![0.0; k];
    for n in 0..k {
        lo[n] = if pinned[n] {
            1.0
        } else {
            // With the partner load fixed, the eigenvalue cannot drop
            // below 1/(other+1); keep a hair of slack so the inverse map
            // stays finite.
            (1.0 / (other[n] + 1.0)) * (1.0 + 1e-10) + 1e-14
        };
    }
    let region = FeasibleRegion {
        lo,
        hi: vec![1.0; k],
        prefix_caps: qos.prefix_sums(),
        ordered: true,
    };
    let obj = ConditionalCurves {
        other,
        gains: own_gains,
        pinned: &pinned,
    };
    let res = convex_solve(&obj, &region, cfg, Some(lam));
    if !res.converged {
        return Err(Error::Convergence {
            iterations: res.iterations,
            residual: res.kkt_residual,
            last_iterate: res.minimizer,
        });
    }
    let new_lam = res.minimizer;
    let mut new_own = vec![0.0; k];
    for n in 0..k {
        new_own[n] = if pinned[n] {
            0.0
        } else {
            invert_load(new_lam[n], other[n]).max(0.0)
        };
    }
    Ok((new_lam, new_own))
}

/// Load on this side producing eigenvalue `lam` when the partner load is
/// `other`; the inverse of `lam = (x + other + 1) / ((x + 1)(other + 1))`.
fn invert_load(lam: f64, other: f64) -> f64 {
    let denom = ((other + 1.0) * lam - 1.0).max(1e-14);
    other / denom - 1.0
}

/// This side's power as a separable function of the eigenvalues, with the
/// partner loads frozen.
struct ConditionalCurves<'a> {
    other: &'a [f64],
    gains: &'a [f64],
    pinned: &'a [bool],
}

impl SeparableObjective for ConditionalCurves<'_> {
    fn dim(&self) -> usize {
        self.other.len()
    }

    fn value(&self, n: usize, lam: f64) -> f64 {
        if self.pinned[n] {
            return 0.0;
        }
        invert_load(lam, self.other[n]).max(0.0) / self.gains[n]
    }

    fn deriv(&self, n: usize, lam: f64) -> f64 {
        if self.pinned[n] {
            return 0.0;
        }
        let o = self.other[n];
        let denom = ((o + 1.0) * lam - 1.0).max(1e-14);
        -o * (o + 1.0) / (denom * denom) / self.gains[n]
    }

    fn curvature(&self, n: usize, lam: f64) -> f64 {
        if self.pinned[n] {
            return 0.0;
        }
        let o = self.other[n];
        let denom = ((o + 1.0) * lam - 1.0).max(1e-14);
        2.0 * o * (o + 1.0) * (o + 1.0) / (denom * denom * denom) / self.gains[n]
    }
}
