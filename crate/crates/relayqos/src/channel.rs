//! Channel generation and eigen-domain decomposition for the two-hop link.
//!
//! A link realization is the pair (`h1`, `h2`): source-to-relay and
//! relay-to-destination matrices, plus the per-antenna noise variance `rho`.
//! All power allocation downstream works on the top-`k` singular structure of
//! the two hops, which [`decompose`] extracts with a deterministic phase
//! convention so that repeated runs produce bitwise-identical factors.

use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative threshold under which a singular value counts as rank-deficient.
pub const RANK_TOL: f64 = 1e-12;

/// One draw of the two-hop channel pair together with the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// First-hop channel, relay x source (m x n).
    pub h1: DMatrix<C64>,
    /// Second-hop channel, destination x relay (n x m).
    pub h2: DMatrix<C64>,
    /// Noise variance per receive antenna (same at relay and destination).
    pub rho: f64,
}

impl ChannelRealization {
    /// Source/destination antenna count.
    pub fn n(&self) -> usize {
        self.h1.ncols()
    }

    /// Relay antenna count.
    pub fn m(&self) -> usize {
        self.h1.nrows()
    }

    fn validate(&self) -> Result<()> {
        if self.h1.nrows() != self.h2.ncols() || self.h1.ncols() != self.h2.nrows() {
            return Err(Error::invalid(format!(
                "hop shapes do not chain: h1 is {}x{}, h2 is {}x{}",
                self.h1.nrows(),
                self.h1.ncols(),
                self.h2.nrows(),
                self.h2.ncols()
            )));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::invalid(format!(
                "noise variance must be positive and finite, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Top-`k` singular structure of both hops.
///
/// Squared singular values are stored in non-increasing order; singular
/// vector columns are aligned with them and phase-normalized so that the
/// largest-magnitude entry of each right singular vector is real positive.
#[derive(Debug, Clone)]
pub struct ChannelEigen {
    /// Number of retained streams.
    pub k: usize,
    /// Squared singular values of `h1`, non-increasing, length `k`.
    pub lam_h1: Vec<f64>,
    /// Squared singular values of `h2`, non-increasing, length `k`.
    pub lam_h2: Vec<f64>,
    /// Right singular vectors of `h1` (n x k).
    pub v_h1: DMatrix<C64>,
    /// Left singular vectors of `h1` (m x k).
    pub omega_h1: DMatrix<C64>,
    /// Right singular vectors of `h2` (m x k).
    pub v_h2: DMatrix<C64>,
    /// Left singular vectors of `h2` (n x k).
    pub omega_h2: DMatrix<C64>,
}

/// Draws a channel pair with i.i.d. circularly-symmetric complex Gaussian
/// entries of variance `1/n`, deterministically from `seed`.
///
/// Equivalent to [`generate_channel_for_trial`] with trial index 0.
pub fn generate_channel(n: usize, m: usize, rho: f64, seed: u64) -> Result<ChannelRealization> {
    generate_channel_for_trial(n, m, rho, seed, 0)
}

/// Draws the channel pair for one Monte-Carlo trial.
///
/// Each `(seed, trial)` pair selects an independent counter-based RNG
/// stream, so trials can run on any number of threads in any order and
/// still produce identical realizations.
pub fn generate_channel_for_trial(
    n: usize,
    m: usize,
    rho: f64,
    seed: u64,
    trial: u64,
) -> Result<ChannelRealization> {
    if n == 0 || m == 0 {
        return Err(Error::invalid(format!(
            "antenna counts must be positive, got n={n}, m={m}"
        )));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    // Per-entry variance 1/n split evenly between real and imaginary parts.
    let sd = (0.5 / n as f64).sqrt();
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    let mut draw = |rows: usize, cols: usize| {
        // Row-major fill keeps the draw order independent of matrix layout.
        let mut mat = DMatrix::<C64>::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let re = normal.sample(&mut rng);
                let im = normal.sample(&mut rng);
                mat[(r, c)] = Complex::new(re, im);
            }
        }
        mat
    };
    let h1 = draw(m, n);
    let h2 = draw(n, m);
    Ok(ChannelRealization { h1, h2, rho })
}

/// Thin SVD with singular values sorted non-increasing and columns permuted
/// to match. Returns (left vectors, singular values, right vectors).
fn svd_sorted(h: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    let svd = nalgebra::SVD::new(h.clone(), true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return left vectors".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right vectors".into()))?;
    let v = v_t.adjoint();
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "SVD produced non-finite singular values".into(),
        ));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values"));
    let sorted_s: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let sorted_u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let sorted_v = DMatrix::from_columns(&order.iter().map(|&i| v.column(i)).collect::<Vec<_>>());
    Ok((sorted_u, sorted_s, sorted_v))
}

fn numerical_rank(s: &[f64]) -> usize {
    let max = s.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * max).count()
}

/// Multiplies column `j` of the right/left vector pair by a unit phase so
/// that the largest-magnitude entry of the right vector is real positive.
/// The product `omega * v^H` is unchanged, making the factorization unique.
fn fix_phase(omega: &mut DMatrix<C64>, v: &mut DMatrix<C64>, j: usize) {
    let col = v.column(j);
    let mut best = 0usize;
    let mut best_mag = 0.0f64;
    for (i, entry) in col.iter().enumerate() {
        let mag = entry.norm();
        if mag > best_mag {
            best_mag = mag;
            best = i;
        }
    }
    if best_mag == 0.0 {
        return;
    }
    let phase = v[(best, j)] / Complex::new(best_mag, 0.0);
    let factor = phase.conj();
    for i in 0..v.nrows() {
        v[(i, j)] *= factor;
    }
    for i in 0..omega.nrows() {
        omega[(i, j)] *= factor;
    }
}

/// Extracts the top-`k` singular structure of both hops.
///
/// Fails with [`Error::InfeasibleDimension`] when `k` exceeds the numerical
/// rank of either hop (relative tolerance [`RANK_TOL`]).
pub fn decompose(ch: &ChannelRealization, k: usize) -> Result<ChannelEigen> {
    ch.validate()?;
    let max_k = ch.n().min(ch.m());
    if k == 0 || k > max_k {
        return Err(Error::invalid(format!(
            "stream count must satisfy 1 <= k <= {max_k}, got {k}"
        )));
    }
    let (mut omega_h1, s1, mut v_h1) = svd_sorted(&ch.h1)?;
    let (mut omega_h2, s2, mut v_h2) = svd_sorted(&ch.h2)?;
    let rank = numerical_rank(&s1).min(numerical_rank(&s2));
    if k > rank {
        return Err(Error::InfeasibleDimension {
            requested: k,
            rank,
            tol: RANK_TOL,
        });
    }
    for j in 0..k {
        fix_phase(&mut omega_h1, &mut v_h1, j);
        fix_phase(&mut omega_h2, &mut v_h2, j);
    }
    let take = |m: &DMatrix<C64>| m.columns(0, k).into_owned();
    Ok(ChannelEigen {
        k,
        lam_h1: s1[..k].iter().map(|s| s * s).collect(),
        lam_h2: s2[..k].iter().map(|s| s * s).collect(),
        v_h1: take(&v_h1),
        omega_h1: take(&omega_h1),
        v_h2: take(&v_h2),
        omega_h2: take(&omega_h2),
    })
}

/// Upper bound on entries accepted by the channel-file parser, to keep
/// hostile headers from forcing absurd allocations.
const MAX_FILE_ENTRIES: usize = 1 << 24;

/// Serializes a realization in the plain-text interchange format:
/// a header line `m n`, then the `m x n` first hop and the `n x m` second
/// hop, row-major, one `re im` pair per entry. `rho` is not stored.
pub fn format_channel_text(ch: &ChannelRealization) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", ch.m(), ch.n()));
    let mut push_matrix = |h: &DMatrix<C64>| {
        for r in 0..h.nrows() {
            let row: Vec<String> = (0..h.ncols())
                .map(|c| format!("{} {}", h[(r, c)].re, h[(r, c)].im))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    };
    push_matrix(&ch.h1);
    push_matrix(&ch.h2);
    out
}

/// Parses the plain-text interchange format produced by
/// [`format_channel_text`]. Never panics on malformed input.
pub fn parse_channel_text(text: &str, rho: f64) -> Result<ChannelRealization> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    let mut tokens = text.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::invalid(format!("missing {name} in header")))?;
        let val: usize = tok.parse().map_err(|_| {
            Error::invalid(format!("header {name} is not a positive integer: {tok:?}"))
        })?;
        if val == 0 {
            return Err(Error::invalid(format!("header {name} must be positive")));
        }
        Ok(val)
    };
    let m = dim("m")?;
    let n = dim("n")?;
    let per_matrix = m
        .checked_mul(n)
        .filter(|&e| e <= MAX_FILE_ENTRIES)
        .ok_or_else(|| {
            Error::invalid(format!(
                "matrix of {m}x{n} entries exceeds the parser limit"
            ))
        })?;
    let mut values = Vec::with_capacity(4 * per_matrix);
    for tok in tokens {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::invalid(format!("bad numeric token {tok:?}")))?;
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite entry {tok:?}")));
        }
        values.push(v);
        if values.len() > 4 * per_matrix {
            return Err(Error::invalid(format!(
                "expected {} values after the header, found more",
                4 * per_matrix
            )));
        }
    }
    if values.len() != 4 * per_matrix {
        return Err(Error::invalid(format!(
            "expected {} values after the header, found {}",
            4 * per_matrix,
            values.len()
        )));
    }
    let mut cursor = values.chunks_exact(2);
    let mut read_matrix = |rows: usize, cols: usize| {
        let mut h = DMatrix::<C64>::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let pair = cursor.next().expect("length checked above");
                h[(r, c)] = Complex::new(pair[0], pair[1]);
            }
        }
        h
    };
    let h1 = read_matrix(m, n);
    let h2 = read_matrix(n, m);
    Ok(ChannelRealization { h1, h2, rho })
}

/// Writes the interchange format to `path`.
pub fn write_channel_file(path: &std::path::Path, ch: &ChannelRealization) -> Result<()> {
    std::fs::write(path, format_channel_text(ch))?;
    Ok(())
}

/// Reads the interchange format from `path`, attaching the supplied `rho`.
pub fn read_channel_file(path: &std::path::Path, rho: f64) -> Result<ChannelRealization> {
    let text = std::fs::read_to_string(path)?;
    parse_channel_text(&text, rho)
}
