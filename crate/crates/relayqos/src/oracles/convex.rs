//! Generic certified solver for separable convex objectives over the
//! target polyhedra.
//!
//! Two phases: projected gradient with backtracking drives the iterate
//! into the neighborhood of the optimum, then an active-set Newton polish
//! solves the KKT system of the locally binding constraints to full
//! precision. The result carries a normalized KKT residual computed from
//! scratch (non-negative least-squares multipliers), so a wrong answer
//! cannot claim convergence.

use nalgebra::{DMatrix, DVector};

use super::projection::independent_rows;
use super::{FeasibleRegion, OracleResult, SeparableObjective, SolverConfig};

/// Activity window: a constraint within this relative distance of its
/// bound is treated as binding.
const ACTIVE_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Minimizes a separable convex objective over a feasible region.
///
/// `start` seeds the iterate (it is projected first); pass the QoS targets
/// when available since they are always feasible. The runtime scales with
/// `cfg.max_iters` in the worst case but typical instances finish in a few
/// hundred gradient steps plus a handful of Newton steps.
pub fn convex_solve(
    obj: &dyn SeparableObjective,
    region: &FeasibleRegion,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> OracleResult {
    let k = obj.dim();
    assert_eq!(k, region.dim(), "objective and region dimension mismatch");
    let midpoint: Vec<f64> = region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(l, h)| 0.5 * (l + h))
        .collect();
    let mut x = region.project(start.unwrap_or(&midpoint));
    let mut value = obj.total(&x);
    let mut grad = vec![0.0; k];
    let mut iterations = 0usize;

    // Phase 1: projected gradient with an adaptive backtracked step. It
    // only needs to land near the optimal face: the Newton polish that
    // follows converges quadratically from there and the final
    // certificate is what decides convergence, so the budget is kept
    // small rather than letting first-order steps crawl to fine
    // precision.
    let pg_budget = cfg.max_iters.min(400);
    let mut step = 1.0f64;
    while iterations < pg_budget {
        obj.gradient(&x, &mut grad);
        step = (step * 4.0).min(1e12);
        let mut accepted = false;
        let mut moved = 0.0f64;
        while step > 1e-18 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
            let cand = region.project(&trial);
            let cval = obj.total(&cand);
            let along: f64 = grad
                .iter()
                .zip(cand.iter().zip(&x))
                .map(|(g, (c, xi))| g * (c - xi))
                .sum();
            if cval <= value + 1e-4 * along + 1e-14 * (1.0 + value.abs()) {
                moved = cand
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                x = cand;
                value = cval;
                accepted = true;
                break;
            }
            step *= 0.25;
        }
        iterations += 1;
        if !accepted || moved <= 1e-13 * (1.0 + inf_norm(&x)) {
            break;
        }
    }

    // Phase 2: active-set Newton polish on the binding constraints.
    let rows = region.constraint_rows();
    let mut working = independent_rows(&rows, &active_set(&rows, &x), k);
    let mut residual = f64::INFINITY;
    'outer: for _round in 0..60 {
        let mut last_mu: Vec<f64> = Vec::new();
        for _ in 0..50 {
            if iterations >= cfg.max_iters {
                break 'outer;
            }
            // Dependent rows would make the KKT system singular; the
            // filter keeps blockers (independent by construction) and
            // drops redundant survivors of earlier rounds.
            working = independent_rows(&rows, &working, k);
            obj.gradient(&x, &mut grad);
            let hdiag: Vec<f64> = (0..k).map(|n| obj.curvature(n, x[n]).max(0.0)).collect();
            let hmax = hdiag.iter().fold(1.0f64, |a, &b| a.max(b));
            let sigma = 1e-12 * hmax;
            let m = working.len();
            let mut kkt = DMatrix::<f64>::zeros(k + m, k + m);
            for n in 0..k {
                kkt[(n, n)] = hdiag[n] + sigma;
            }
            for (i, &ri) in working.iter().enumerate() {
                for n in 0..k {
                    kkt[(n, k + i)] = rows[ri].0[n];
                    kkt[(k + i, n)] = rows[ri].0[n];
                }
            }
            let mut rhs = DVector::<f64>::zeros(k + m);
            for n in 0..k {
                rhs[n] = -grad[n];
            }
            for (i, &ri) in working.iter().enumerate() {
                rhs[k + i] = rows[ri].1 - dot(&rows[ri].0, &x);
            }
            let sol = match kkt.lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            };
            let d: Vec<f64> = (0..k).map(|n| sol[n]).collect();
            // The multipliers come out with the sign convention of
            // "gradient + A^T mu = 0" for rows written as a.x <= b.
            last_mu = (0..m).map(|i| sol[k + i]).collect();
            let restore = (0..m).map(|i| rhs[k + i].abs()).fold(0.0f64, f64::max);
            if inf_norm(&d) <= 1e-14 * (1.0 + inf_norm(&x)) && restore <= 1e-12 {
                break;
            }
            // Largest step keeping the constraints outside the working set
            // satisfied; a blocking row joins the working set.
            let mut tau = 1.0f64;
            let mut blocker = None;
            for (ri, row) in rows.iter().enumerate() {
                if working.contains(&ri) {
                    continue;
                }
                let ad = dot(&row.0, &d);
                if ad > 1e-14 {
                    let slack = (row.1 - dot(&row.0, &x)).max(0.0);
                    let t = slack / ad;
                    if t < tau {
                        tau = t;
                        blocker = Some(ri);
                    }
                }
            }
            let mut t = tau;
            let mut accepted = false;
            while t > 1e-16 {
                // Project the candidate: Newton directions can be huge
                // along zero-curvature coordinates and land a hair
                // outside the region, where a steep objective pays a
                // phantom reward that the line search would then defend
                // against every feasibility-restoring step.
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
                let cand = region.project(&trial);
                let cval = obj.total(&cand);
                let along: f64 = grad
                    .iter()
                    .zip(cand.iter().zip(&x))
                    .map(|(g, (c, xi))| g * (c - xi))
                    .sum();
                if cval <= value + 1e-4 * along.min(0.0) + 1e-12 * (1.0 + value.abs()) {
                    x = cand;
                    value = cval;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
            if t >= tau && tau < 1.0 {
                if let Some(b) = blocker {
                    working.push(b);
                }
            }
        }
        // Leave the working set when a multiplier says a constraint is
        // held against its own interest.
        if let Some((drop_pos, &mu_min)) = last_mu
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        {
            if mu_min < -1e-10 * (1.0 + inf_norm(&grad)) {
                working.remove(drop_pos);
                continue;
            }
        }
        residual = kkt_certificate(obj, region, &rows, &x);
        if residual <= cfg.tol_kkt {
            break;
        }
        let refreshed = independent_rows(&rows, &active_set(&rows, &x), k);
        if refreshed == working {
            break;
        }
        working = refreshed;
    }
    if residual.is_infinite() {
        residual = kkt_certificate(obj, region, &rows, &x);
    }
    let value = obj.total(&x);
    let converged = residual <= cfg.tol_kkt;
    OracleResult {
        minimizer: x,
        value,
        iterations,
        kkt_residual: residual,
        converged,
    }
}

fn active_set(rows: &[(Vec<f64>, f64)], x: &[f64]) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, (a, b))| dot(a, x) - b >= -ACTIVE_TOL * (1.0 + b.abs()))
        .map(|(i, _)| i)
        .collect()
}

/// Normalized KKT residual at `x`: the worst of primal feasibility,
/// stationarity with non-negative least-squares multipliers, and
/// complementary slackness.
pub(crate) fn kkt_certificate(
    obj: &dyn SeparableObjective,
    region: &FeasibleRegion,
    rows: &[(Vec<f64>, f64)],
    x: &[f64],
) -> f64 {
    let k = obj.dim();
    let mut grad = vec![0.0; k];
    obj.gradient(x, &mut grad);
    let gscale = 1.0 + inf_norm(&grad);
    let mut primal = 0.0f64;
    for (a, b) in rows {
        primal = primal.max((dot(a, x) - b) / (1.0 + b.abs()));
    }
    primal = primal.max(region.max_violation(x));
    let active: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| (dot(a, x) - b).abs() <= ACTIVE_TOL * (1.0 + b.abs()))
        .map(|(i, _)| i)
        .collect();
    // Stationarity asks for grad + A^T mu = 0 with mu >= 0 on the active
    // rows; solve the non-negative least-squares problem directly.
    let m = active.len();
    let mut stationarity = inf_norm(&grad) / gscale;
    let mut complementarity = 0.0f64;
    if m > 0 {
        let a_t = DMatrix::<f64>::from_fn(k, m, |n, i| rows[active[i]].0[n]);
        let y = DVector::<f64>::from_fn(k, |n, _| -grad[n]);
        let mu = nnls(&a_t, &y);
        let resid = &y - &a_t * &mu;
        stationarity = resid.amax() / gscale;
        for (i, &ri) in active.iter().enumerate() {
            let slack = dot(&rows[ri].0, x) - rows[ri].1;
            complementarity =
                complementarity.max((mu[i] * slack).abs() / (gscale * (1.0 + rows[ri].1.abs())));
        }
    }
    primal.max(stationarity).max(complementarity)
}

/// Non-negative least squares `min ||M mu - y||, mu >= 0` by the active-set
/// method of Lawson and Hanson; dimensions here are tiny.
fn nnls(m_mat: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let m = m_mat.ncols();
    let mut passive = vec![false; m];
    let mut mu = DVector::<f64>::zeros(m);
    let tol = 1e-12 * (1.0 + y.amax());
    for _ in 0..(3 * m + 10) {
        let residual = y - m_mat * &mu;
        let w = m_mat.transpose() * &residual;
        let mut best = None;
        for i in 0..m {
            if !passive[i] && w[i] > tol {
                best = match best {
                    Some((_, bw)) if bw >= w[i] => best,
                    _ => Some((i, w[i])),
                };
            }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let sub = DMatrix::<f64>::from_fn(m_mat.nrows(), idx.len(), |r, c| m_mat[(r, idx[c])]);
            let svd = sub.svd(true, true);
            let s = match svd.solve(y, 1e-13) {
                Ok(s) => s,
                Err(_) => return mu,
            };
            if s.iter().all(|&v| v > 0.0) {
                mu.fill(0.0);
                for (c, &i) in idx.iter().enumerate() {
                    mu[i] = s[c];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (c, &i) in idx.iter().enumerate() {
                if s[c] <= 0.0 {
                    let denom = mu[i] - s[c];
                    if denom > 0.0 {
                        alpha = alpha.min(mu[i] / denom);
                    }
                }
            }
            for (c, &i) in idx.iter().enumerate() {
                mu[i] += alpha * (s[c] - mu[i]);
                if mu[i] <= 1e-14 {
                    mu[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    mu
}
