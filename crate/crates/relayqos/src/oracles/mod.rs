//! Independent baselines used to certify the closed-form solvers.
//!
//! Nothing in this module knows the closed forms it checks. Three oracles
//! are provided:
//!
//! - [`convex_solve`]: a generic projected-gradient method with an
//!   active-set Newton polish and a KKT residual certificate, for any
//!   separable convex objective over a prefix-capped, ordered box.
//! - [`grid_search`]: brute-force enumeration of the exact nonconvex
//!   objectives on a feasible grid, for up to three streams.
//! - [`alternating_ab`]: the alternating-minimization baseline that solves
//!   the power split exactly in one SNR factor while holding the other
//!   fixed.
//!
//! All routines are pure; results carry their own diagnostics instead of
//! trusting the caller's tolerances.

mod alternating;
mod convex;
mod feasible;
mod grid;
mod projection;

pub use alternating::{alternating_ab, alternating_from_gains, AlternatingRun};
pub use convex::convex_solve;
pub use feasible::FeasibleRegion;
pub use grid::{
    grid_minimize, grid_resolution_bound, grid_search, grid_search_profile, GridProblem,
};

/// Smallest MSE any solver is allowed to emit; keeps `1/lam` finite.
pub const LAM_FLOOR: f64 = 1e-12;

/// Tuning knobs shared by the oracle solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Convergence target for the normalized KKT residual.
    pub tol_kkt: f64,
    /// Iteration budget across gradient and polish phases.
    pub max_iters: usize,
    /// Grid density per coordinate for [`grid_search`].
    pub grid_points_per_dim: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_kkt: 1e-9,
            max_iters: 100_000,
            grid_points_per_dim: 400,
        }
    }
}

/// Outcome of an oracle run, with the certificate that backs it.
///
/// `converged` is only set when the KKT residual met the configured
/// tolerance; exhaustive grid results report a zero residual since their
/// certificate is the grid resolution instead.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Best point found.
    pub minimizer: Vec<f64>,
    /// Objective value at the minimizer.
    pub value: f64,
    /// Gradient steps, Newton steps, or grid evaluations spent.
    pub iterations: usize,
    /// Normalized stationarity/feasibility/complementarity residual.
    pub kkt_residual: f64,
    /// Whether the residual met the tolerance.
    pub converged: bool,
}

/// A sum of independent one-dimensional convex curves.
///
/// Implementors supply the value and both derivatives of each coordinate's
/// curve; the solvers never need the sum's structure beyond this.
pub trait SeparableObjective: Sync {
    /// Number of coordinates.
    fn dim(&self) -> usize;
    /// Value of curve `n` at `x`.
    fn value(&self, n: usize, x: f64) -> f64;
    /// First derivative of curve `n` at `x`.
    fn deriv(&self, n: usize, x: f64) -> f64;
    /// Second derivative of curve `n` at `x`.
    fn curvature(&self, n: usize, x: f64) -> f64;

    /// Objective value at a point.
    fn total(&self, x: &[f64]) -> f64 {
        (0..self.dim()).map(|n| self.value(n, x[n])).sum()
    }

    /// Gradient at a point, written into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for n in 0..self.dim() {
            out[n] = self.deriv(n, x[n]);
        }
    }
}
