//! Exhaustive grid search over the feasible region for small stream
//! counts.
//!
//! The grid enumerates an axis-aligned lattice inside the box, prunes
//! lattice points that violate the ordering or prefix constraints, and
//! returns the best feasible lattice point. It is deliberately simple so
//! it can serve as an independent check on the analytical solvers: the
//! only shared code is the objective itself.

use rayon::prelude::*;

use crate::channel::ChannelEigen;
use crate::error::{Error, Result};
use crate::linear::PowerCurves;
use crate::nonlinear::LogPowerCurves;
use crate::qos::{QosVector, StreamProfile};

use super::{FeasibleRegion, OracleResult, SeparableObjective, SolverConfig};

/// Largest stream count the exhaustive search accepts; the lattice has
/// `grid_points_per_dim^k` candidates before pruning.
pub const GRID_MAX_STREAMS: usize = 3;

/// Which receiver's power objective the grid evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridProblem {
    /// Linear receiver: per-stream power as a function of the MSE
    /// eigenvalue, searched over the eigenvalue box.
    Linear,
    /// Decision-feedback receiver: per-stream power as a function of the
    /// log MSE eigenvalue, searched over the log-domain box.
    Nonlinear,
}

/// Runs the exhaustive search for a channel and QoS target.
///
/// Fails with [`Error::Capability`] when the stream count exceeds
/// [`GRID_MAX_STREAMS`]; the lattice would be too large to enumerate
/// honestly.
pub fn grid_search(
    problem: GridProblem,
    eigen: &ChannelEigen,
    qos: &QosVector,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<OracleResult> {
    let profile = StreamProfile::from_eigen(eigen, rho)?;
    grid_search_profile(problem, &profile, qos, cfg)
}

/// Same as [`grid_search`] but starting from precomputed per-stream
/// constants.
pub fn grid_search_profile(
    problem: GridProblem,
    profile: &StreamProfile,
    qos: &QosVector,
    cfg: &SolverConfig,
) -> Result<OracleResult> {
    let k = profile.k();
    if k != qos.k() {
        return Err(Error::invalid(
            "profile and QoS vector disagree on the stream count",
        ));
    }
    if k > GRID_MAX_STREAMS {
        return Err(Error::Capability(format!(
            "grid search supports at most {GRID_MAX_STREAMS} streams, got {k}"
        )));
    }
    match problem {
        GridProblem::Linear => {
            let obj = PowerCurves::from_profile(profile);
            let region = FeasibleRegion::lambda_region(qos);
            grid_minimize(&obj, &region, cfg)
        }
        GridProblem::Nonlinear => {
            let obj = LogPowerCurves::from_profile(profile);
            let region = FeasibleRegion::theta_region(&qos.kappa);
            grid_minimize(&obj, &region, cfg)
        }
    }
}

/// Enumerates the lattice and returns the best feasible point.
///
/// The reported `kkt_residual` is zero by convention: the certificate of a
/// grid result is its resolution (see [`grid_resolution_bound`]), not a
/// stationarity measure. `iterations` counts evaluated lattice points.
pub fn grid_minimize(
    obj: &dyn SeparableObjective,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
) -> Result<OracleResult> {
    let k = region.dim();
    if k == 0 || k > GRID_MAX_STREAMS {
        return Err(Error::Capability(format!(
            "grid search supports 1 to {GRID_MAX_STREAMS} dimensions, got {k}"
        )));
    }
    if obj.dim() != k {
        return Err(Error::invalid("objective and region dimension mismatch"));
    }
    let points = cfg.grid_points_per_dim.max(2);
    let lo = region.lo[0];
    let hi = region.hi[0];
    for n in 0..k {
        if (region.lo[n] - lo).abs() > 1e-15 || (region.hi[n] - hi).abs() > 1e-15 {
            return Err(Error::invalid(
                "grid search expects a uniform box across coordinates",
            ));
        }
    }
    let h = (hi - lo) / (points - 1) as f64;
    let mut lattice: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    lattice[points - 1] = hi;

    // Parallelize over the first coordinate; each slice runs an
    // independent sequential search with purely local pruning so the
    // outcome never depends on thread scheduling.
    let slices: Vec<(f64, Vec<f64>)> = (0..points)
        .into_par_iter()
        .filter_map(|i0| {
            let x0 = lattice[i0];
            if x0 > region.prefix_caps[0] + 1e-12 {
                return None;
            }
            let mut best_val = f64::INFINITY;
            let mut best_x = vec![0.0; k];
            let mut x = vec![0.0; k];
            x[0] = x0;
            descend(
                obj,
                region,
                &lattice,
                &mut x,
                1,
                i0,
                x0,
                obj.value(0, x0),
                &mut best_val,
                &mut best_x,
            );
            if best_val.is_finite() {
                Some((best_val, best_x))
            } else {
                None
            }
        })
        .collect();

    let mut best_val = f64::INFINITY;
    let mut best_x = Vec::new();
    for (val, xs) in slices {
        if val < best_val {
            best_val = val;
            best_x = xs;
        }
    }
    if !best_val.is_finite() {
        return Err(Error::Numerical(
            "grid search found no feasible lattice point".into(),
        ));
    }
    let evals = points.pow(k as u32);
    Ok(OracleResult {
        minimizer: best_x,
        value: best_val,
        iterations: evals,
        kkt_residual: 0.0,
        converged: true,
    })
}

#[allow(clippy::too_many_arguments)]
fn descend(
    obj: &dyn SeparableObjective,
    region: &FeasibleRegion,
    lattice: &[f64],
    x: &mut Vec<f64>,
    n: usize,
    prev_idx: usize,
    prefix: f64,
    partial: f64,
    best_val: &mut f64,
    best_x: &mut Vec<f64>,
) {
    let k = region.dim();
    if n == k {
        if partial < *best_val {
            *best_val = partial;
            best_x.copy_from_slice(x);
        }
        return;
    }
    // The per-coordinate terms are non-negative powers, so a partial sum
    // already at or above the incumbent can be cut.
    if partial >= *best_val {
        return;
    }
    let start = if region.ordered { prev_idx } else { 0 };
    for (offset, &xn) in lattice[start..].iter().enumerate() {
        let i = start + offset;
        let new_prefix = prefix + xn;
        if new_prefix > region.prefix_caps[n] + 1e-12 {
            break;
        }
        let term = obj.value(n, xn);
        let new_partial = partial + term;
        if new_partial >= *best_val {
            continue;
        }
        x[n] = xn;
        descend(
            obj,
            region,
            lattice,
            x,
            n + 1,
            i,
            new_prefix,
            new_partial,
            best_val,
            best_x,
        );
    }
}

/// First-order bound on how far the best lattice value can sit above the
/// true optimum, evaluated around a point `at` (normally the grid
/// minimizer).
///
/// Rounding each optimal coordinate down to the lattice keeps every
/// constraint satisfied (all constraints are upper bounds on sums of
/// coordinates), and each coordinate moves by at most one lattice step,
/// so the objective increase is bounded by the sum of one-step decreases
/// of the per-coordinate curves.
pub fn grid_resolution_bound(
    obj: &dyn SeparableObjective,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    at: &[f64],
) -> f64 {
    let points = cfg.grid_points_per_dim.max(2);
    let mut bound = 0.0;
    for (n, &an) in at.iter().enumerate().take(region.dim()) {
        let h = (region.hi[n] - region.lo[n]) / (points - 1) as f64;
        let down = (an - h).max(region.lo[n]);
        bound += (obj.value(n, down) - obj.value(n, an)).max(0.0);
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::HyperbolaCurves;
    use crate::oracles::LAM_FLOOR;

    fn unit_region(k: usize, caps: Vec<f64>) -> FeasibleRegion {
        FeasibleRegion {
            lo: vec![LAM_FLOOR; k],
            hi: vec![1.0; k],
            prefix_caps: caps,
            ordered: true,
        }
    }

    #[test]
    fn single_stream_grid_lands_next_to_the_cap() {
        let obj = HyperbolaCurves { w: vec![1.0] };
        let region = unit_region(1, vec![0.7]);
        let cfg = SolverConfig::default();
        let res = grid_minimize(&obj, &region, &cfg).unwrap();
        let h = (1.0 - LAM_FLOOR) / (cfg.grid_points_per_dim - 1) as f64;
        assert!(
            res.minimizer[0] <= 0.7 + 1e-12 && res.minimizer[0] >= 0.7 - h - 1e-12,
            "grid point {} should sit within one step below the cap 0.7",
            res.minimizer[0]
        );
        assert!(
            res.value >= 1.0 / 0.7 - 1e-12,
            "grid can never beat the true optimum"
        );
        let slack = grid_resolution_bound(&obj, &region, &cfg, &res.minimizer);
        assert!(
            res.value - 1.0 / 0.7 <= slack + 1e-12,
            "gap {} exceeds the resolution bound {}",
            res.value - 1.0 / 0.7,
            slack
        );
    }

    #[test]
    fn two_stream_grid_brackets_the_closed_form() {
        let w = vec![1.0, 4.0];
        let obj = HyperbolaCurves { w: w.clone() };
        let region = unit_region(2, vec![1.0, 1.0]);
        let cfg = SolverConfig::default();
        let res = grid_minimize(&obj, &region, &cfg).unwrap();
        let exact = 9.0;
        assert!(
            res.value >= exact - 1e-9,
            "grid value {} beneath the optimum",
            res.value
        );
        let slack = grid_resolution_bound(&obj, &region, &cfg, &res.minimizer);
        assert!(
            res.value - exact <= slack,
            "gap {} exceeds the resolution bound {}",
            res.value - exact,
            slack
        );
        assert!(res.converged && res.kkt_residual == 0.0);
        assert_eq!(res.iterations, cfg.grid_points_per_dim.pow(2));
    }

    #[test]
    fn ordering_constraint_prunes_decreasing_candidates() {
        let obj = HyperbolaCurves { w: vec![10.0, 1.0] };
        let region = unit_region(2, vec![2.0, 2.0]);
        let cfg = SolverConfig::default();
        let res = grid_minimize(&obj, &region, &cfg).unwrap();
        assert!(
            res.minimizer[0] <= res.minimizer[1] + 1e-15,
            "minimizer {:?} must be non-decreasing",
            res.minimizer
        );
    }

    #[test]
    fn too_many_streams_is_a_capability_error() {
        let obj = HyperbolaCurves { w: vec![1.0; 4] };
        let region = unit_region(4, vec![4.0; 4]);
        let err = grid_minimize(&obj, &region, &SolverConfig::default()).unwrap_err();
        assert!(
            matches!(err, Error::Capability(_)),
            "expected a capability refusal, got {err:?}"
        );
    }

    #[test]
    fn deterministic_across_repeat_runs() {
        let obj = HyperbolaCurves {
            w: vec![0.3, 2.0, 7.0],
        };
        let region = unit_region(3, vec![0.5, 1.1, 1.9]);
        let cfg = SolverConfig {
            grid_points_per_dim: 120,
            ..SolverConfig::default()
        };
        let a = grid_minimize(&obj, &region, &cfg).unwrap();
        let b = grid_minimize(&obj, &region, &cfg).unwrap();
        assert_eq!(
            a.minimizer, b.minimizer,
            "same lattice must give identical bytes"
        );
        assert_eq!(a.value, b.value);
    }
}
