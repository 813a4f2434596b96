//! Euclidean projection building blocks for the feasible polyhedra.

/// L2 isotonic regression with unit weights: the closest non-decreasing
/// vector, by pool-adjacent-violators.
pub(crate) fn pava_increasing(values: &[f64]) -> Vec<f64> {
    // Each block pools a run of coordinates at their common mean.
    let mut sums: Vec<f64> = Vec::with_capacity(values.len());
    let mut counts: Vec<usize> = Vec::with_capacity(values.len());
    for &v in values {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let last = sums.len() - 1;
            if sums[last] / counts[last] as f64 >= sums[last - 1] / counts[last - 1] as f64 {
                break;
            }
            let (s, c) = (sums.pop().unwrap(), counts.pop().unwrap());
            *sums.last_mut().unwrap() += s;
            *counts.last_mut().unwrap() += c;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in sums.iter().zip(&counts) {
        let mean = s / *c as f64;
        out.extend(std::iter::repeat_n(mean, *c));
    }
    out
}

/// Filters `candidates` down to a subset whose constraint normals are
/// linearly independent, by modified Gram-Schmidt with one
/// re-orthogonalization pass. Earlier candidates win ties.
pub(crate) fn independent_rows(
    rows: &[(Vec<f64>, f64)],
    candidates: &[usize],
    dim: usize,
) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for &ri in candidates {
        let mut v = rows[ri].0.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = rows[ri]
            .0
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(1.0);
        if norm > 1e-8 * scale {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
            keep.push(ri);
            if basis.len() == dim {
                break;
            }
        }
    }
    keep
}
