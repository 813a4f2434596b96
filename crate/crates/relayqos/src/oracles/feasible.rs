//! The feasible polyhedra of the allocation problems, with an exact
//! projection.
//!
//! Both target sets share one shape: a box, optional coordinate ordering,
//! and prefix-sum caps. The MSE-domain set caps partial sums of `lam` by
//! partial sums of the targets; the log-domain set is the same picture in
//! `theta` with caps from the log targets.

use nalgebra::{DMatrix, DVector};

use super::projection::{independent_rows, pava_increasing};
use super::LAM_FLOOR;
use crate::qos::QosVector;

/// Intersection of a box, an ordering cone, and prefix-sum halfspaces.
#[derive(Debug, Clone)]
pub struct FeasibleRegion {
    /// Per-coordinate lower bounds.
    pub lo: Vec<f64>,
    /// Per-coordinate upper bounds.
    pub hi: Vec<f64>,
    /// `prefix_caps[j]` caps the sum of the first `j + 1` coordinates.
    pub prefix_caps: Vec<f64>,
    /// Whether coordinates must be non-decreasing.
    pub ordered: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

fn is_non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

impl FeasibleRegion {
    /// MSE-domain target set: `lam` in `[floor, 1]`, ordered, prefix sums
    /// capped by the target prefix sums.
    pub fn lambda_region(qos: &QosVector) -> Self {
        let k = qos.k();
        FeasibleRegion {
            lo: vec![LAM_FLOOR; k],
            hi: vec![1.0; k],
            prefix_caps: qos.prefix_sums(),
            ordered: true,
        }
    }

    /// Log-domain target set: `theta` in `[total log mass, 0]`, ordered,
    /// prefix sums capped by the log-target prefix sums.
    ///
    /// The box floor is exact: no coordinate of any optimum can undershoot
    /// the total log mass, because raising it toward zero while lowering a
    /// later coordinate keeps every constraint satisfied and never
    /// increases a decreasing objective.
    pub fn theta_region(kappa: &[f64]) -> Self {
        let k = kappa.len();
        let mut caps = Vec::with_capacity(k);
        let mut acc = 0.0;
        for &ki in kappa {
            acc += ki;
            caps.push(acc);
        }
        FeasibleRegion {
            lo: vec![acc.min(0.0); k],
            hi: vec![0.0; k],
            prefix_caps: caps,
            ordered: true,
        }
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Largest absolute constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        let mut acc = 0.0;
        for n in 0..self.dim() {
            worst = worst.max(self.lo[n] - x[n]);
            worst = worst.max(x[n] - self.hi[n]);
            if self.ordered && n + 1 < self.dim() {
                worst = worst.max(x[n] - x[n + 1]);
            }
            acc += x[n];
            worst = worst.max(acc - self.prefix_caps[n]);
        }
        worst
    }

    /// Whether `x` satisfies every constraint within `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.max_violation(x) <= tol
    }

    /// Euclidean projection onto the region.
    ///
    /// Fast path: with isotonic bounds, clamping the isotonic regression
    /// of `x` into the box is the exact projection onto the box plus the
    /// ordering cone; if that point also satisfies every prefix cap, it
    /// lies in the region and is therefore the projection onto the whole
    /// region. Otherwise an active-set solve finds the exact projection
    /// in finitely many steps; alternating-projection schemes were
    /// observed to stall measurably far from the answer on degenerate cap
    /// geometry, so nothing here iterates to a tolerance.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let k = self.dim();
        assert_eq!(x.len(), k, "projection dimension mismatch");
        if self.max_violation(x) <= 0.0 {
            return x.to_vec();
        }
        if is_non_decreasing(&self.lo) && is_non_decreasing(&self.hi) {
            let mut z = if self.ordered {
                pava_increasing(x)
            } else {
                x.to_vec()
            };
            for (n, zn) in z.iter_mut().enumerate() {
                *zn = zn.clamp(self.lo[n], self.hi[n]);
            }
            let mut acc = 0.0;
            let mut inside = true;
            for (n, &zn) in z.iter().enumerate() {
                acc += zn;
                if acc > self.prefix_caps[n] {
                    inside = false;
                    break;
                }
            }
            if inside {
                return z;
            }
        }
        let mut y = self.project_active_set(x);
        self.snap_feasible(&mut y);
        y
    }

    /// Rounds away the last-ulp infeasibility an active-set solve can
    /// leave behind, so the result measures inside the region under the
    /// exact arithmetic of `max_violation`.
    ///
    /// The equality-projection and blocking-step arithmetic can land a
    /// coordinate on the wrong side of a bound by a few units in the
    /// last place. Callers compare objective values at projected
    /// points, and on rows where the objective is steep even a 1e-12
    /// escape earns a phantom improvement that then defends the
    /// infeasible point against every feasible candidate. Snapping
    /// costs O(ulp) distance and removes that failure mode.
    fn snap_feasible(&self, z: &mut Vec<f64>) {
        let k = self.dim();
        for _ in 0..4 {
            if self.max_violation(z) <= 0.0 {
                return;
            }
            if self.ordered {
                let pooled = pava_increasing(z);
                *z = pooled;
            }
            for (n, zn) in z.iter_mut().enumerate() {
                *zn = zn.clamp(self.lo[n], self.hi[n]);
            }
            // Forward pass over the caps in the same summation order the
            // violation check uses. Shrinking a coordinate only lowers
            // later prefix sums; a shrink below the floor parks the
            // deficit on the previous coordinate for the next round.
            let mut acc = 0.0;
            for n in 0..k {
                if acc + z[n] > self.prefix_caps[n] {
                    let mut zn = self.prefix_caps[n] - acc;
                    for _ in 0..8 {
                        if acc + zn <= self.prefix_caps[n] {
                            break;
                        }
                        zn = f64::next_down(zn);
                    }
                    if zn < self.lo[n] {
                        let deficit = self.lo[n] - zn;
                        zn = self.lo[n];
                        if n > 0 {
                            z[n - 1] -= deficit;
                        }
                    }
                    z[n] = zn;
                }
                acc += z[n];
            }
        }
    }

    /// Primal active-set solve of `min |y - x|^2` over the region,
    /// starting from a feasible corner and terminating at exact KKT.
    fn project_active_set(&self, x: &[f64]) -> Vec<f64> {
        let k = self.dim();
        let rows = self.constraint_rows();
        // Feasible start: the smallest point dominating the lower bounds.
        // Its prefix sums are coordinate-wise minimal over the region, so
        // it satisfies the caps whenever the region is non-empty.
        let mut y = Vec::with_capacity(k);
        let mut run = f64::NEG_INFINITY;
        for n in 0..k {
            run = if self.ordered {
                run.max(self.lo[n])
            } else {
                self.lo[n]
            };
            y.push(run.min(self.hi[n]));
        }
        debug_assert!(
            self.max_violation(&y) <= 1e-12,
            "feasible corner violates the region by {}",
            self.max_violation(&y)
        );
        let scale = 1.0 + inf_norm(x);
        let mut working: Vec<usize> = Vec::new();
        for _ in 0..300 {
            working = independent_rows(&rows, &working, k);
            let m = working.len();
            // Project x onto the working constraints held as equalities:
            // y_eq = x - A^T mu with (A A^T) mu = A x - b.
            let (y_eq, mu) = if m == 0 {
                (x.to_vec(), Vec::new())
            } else {
                let a = DMatrix::<f64>::from_fn(m, k, |i, n| rows[working[i]].0[n]);
                let rhs = DVector::<f64>::from_fn(m, |i, _| {
                    dot(&rows[working[i]].0, x) - rows[working[i]].1
                });
                let gram = &a * a.transpose();
                let Some(mu) = gram.lu().solve(&rhs) else {
                    break;
                };
                let corr = a.transpose() * &mu;
                let y_eq: Vec<f64> = (0..k).map(|n| x[n] - corr[n]).collect();
                (y_eq, mu.iter().copied().collect::<Vec<f64>>())
            };
            let gap = y_eq
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if gap <= 1e-13 * scale {
                // Already at the equality projection; multipliers decide
                // whether a constraint is held against its own interest.
                let worst = mu
                    .iter()
                    .copied()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
                match worst {
                    Some((i, mu_min)) if mu_min < -1e-12 * scale => {
                        working.remove(i);
                        continue;
                    }
                    _ => return y,
                }
            }
            // Step toward the equality projection, stopping at the first
            // blocking constraint outside the working set.
            let d: Vec<f64> = y_eq.iter().zip(&y).map(|(a, b)| a - b).collect();
            let dnorm = inf_norm(&d);
            let mut tau = 1.0f64;
            let mut blocker = None;
            for (ri, (a, b)) in rows.iter().enumerate() {
                if working.contains(&ri) {
                    continue;
                }
                let ad = dot(a, &d);
                if ad > 1e-12 * dnorm {
                    let t = (b - dot(a, &y)).max(0.0) / ad;
                    if t < tau {
                        tau = t;
                        blocker = Some(ri);
                    }
                }
            }
            for n in 0..k {
                y[n] += tau * d[n];
            }
            if tau < 1.0 {
                if let Some(b) = blocker {
                    working.push(b);
                }
            }
        }
        y
    }

    /// All constraints as rows `(a, b)` meaning `a . x <= b`, for the
    /// KKT machinery.
    pub(crate) fn constraint_rows(&self) -> Vec<(Vec<f64>, f64)> {
        let k = self.dim();
        let mut rows = Vec::new();
        for n in 0..k {
            let mut up = vec![0.0; k];
            up[n] = 1.0;
            rows.push((up, self.hi[n]));
            let mut down = vec![0.0; k];
            down[n] = -1.0;
            rows.push((down, -self.lo[n]));
        }
        if self.ordered {
            for n in 0..k.saturating_sub(1) {
                let mut row = vec![0.0; k];
                row[n] = 1.0;
                row[n + 1] = -1.0;
                rows.push((row, 0.0));
            }
        }
        for j in 0..k {
            let mut row = vec![0.0; k];
            for item in row.iter_mut().take(j + 1) {
                *item = 1.0;
            }
            rows.push((row, self.prefix_caps[j]));
        }
        rows
    }
}
