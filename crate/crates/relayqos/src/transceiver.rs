//! Matrix-level assembly of the optimized transceiver.
//!
//! The allocators work on per-stream loads; this module turns a load
//! vector back into actual matrices: the source precoder `U`, the relay
//! amplifier `F`, the destination equalizer `G`, and, for the
//! decision-feedback receiver, the strictly upper triangular feedback
//! filter `B`. Error covariances and transmit powers are recomputed
//! directly from the matrices so every closed-form quantity can be
//! cross-checked at the level the hardware would see.
//!
//! Capabilities:
//!
//! * precoder and amplifier assembly along the top singular subspaces of
//!   both hops, the relay matrix acting as zero on the orthogonal
//!   complement ([`build_linear`], [`build_dfe`]);
//! * Wiener equalizer and error covariance through Cholesky solves,
//!   never explicit elementwise inverses ([`mse_matrix`]);
//! * feedback-filter construction by triangular factorization of the
//!   receive Gram matrix ([`build_dfe`]);
//! * trace-based total power for cross-checking the allocation formula
//!   ([`total_power_matrices`]);
//! * the constant-modulus rotation that equalizes per-stream MSEs under
//!   equal targets ([`rotation_equal_qos`]).

use std::f64::consts::PI;

use nalgebra::linalg::Cholesky;
use nalgebra::DMatrix;
use num_complex::Complex;

use crate::channel::{ChannelEigen, C64};
use crate::error::{Error, Result};
use crate::linear::Allocation;
use crate::nonlinear::ThetaAllocation;

/// Largest deviation from `Q^H Q = I` accepted as unitary.
pub const UNITARY_TOL: f64 = 1e-10;

/// Assembled transceiver matrices for one channel realization.
///
/// `u` maps the `k` data streams onto the source antennas, `f` is the
/// relay amplify-and-forward matrix, and `g` equalizes at the
/// destination. For the decision-feedback receiver `b_feedback` holds
/// the strictly upper triangular feedback filter and `mse` is the
/// diagonal post-feedback error covariance; for the linear receiver
/// `b_feedback` is `None` and `mse` is the full Wiener error covariance.
#[derive(Debug, Clone)]
pub struct TransceiverMatrices {
    /// Source precoder, `n x k`.
    pub u: DMatrix<C64>,
    /// Relay matrix, `m x m`, zero on the complement of the top-`k`
    /// singular subspaces.
    pub f: DMatrix<C64>,
    /// Destination equalizer, `k x n` (forward filter for the
    /// decision-feedback receiver).
    pub g: DMatrix<C64>,
    /// Strictly upper triangular feedback filter, present only for the
    /// decision-feedback receiver.
    pub b_feedback: Option<DMatrix<C64>>,
    /// Stream rotation applied at the source, `k x k` unitary.
    pub rotation: DMatrix<C64>,
    /// Error covariance of the stream estimates, `k x k` Hermitian
    /// positive semidefinite.
    pub mse: DMatrix<C64>,
}

impl TransceiverMatrices {
    /// Number of data streams.
    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    /// Real diagonal of the error covariance, one entry per stream.
    pub fn per_stream_mse(&self) -> Vec<f64> {
        self.mse.diagonal().iter().map(|e| e.re).collect()
    }
}

/// Unit-magnitude rotation that spreads every stream evenly across the
/// eigenmodes: the normalized discrete Fourier transform matrix.
///
/// Because every entry has magnitude `1/sqrt(k)`, conjugating a diagonal
/// matrix by the result puts the average eigenvalue on every diagonal
/// entry, which is exactly the equal-target MSE condition.
pub fn rotation_equal_qos(k: usize) -> Result<DMatrix<C64>> {
    if k == 0 {
        return Err(Error::invalid("rotation order must be at least 1"));
    }
    let scale = 1.0 / (k as f64).sqrt();
    Ok(DMatrix::from_fn(k, k, |r, c| {
        let phase = -2.0 * PI * ((r * c) % k) as f64 / k as f64;
        Complex::from_polar(scale, phase)
    }))
}

/// Checks that `q` is `k x k` and unitary within [`UNITARY_TOL`].
fn validate_rotation(q: &DMatrix<C64>, k: usize) -> Result<()> {
    if q.nrows() != k || q.ncols() != k {
        return Err(Error::invalid(format!(
            "rotation must be {k} x {k}, got {} x {}",
            q.nrows(),
            q.ncols()
        )));
    }
    let gram = q.adjoint() * q;
    let mut worst = 0.0f64;
    for r in 0..k {
        for c in 0..k {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[(r, c)] - C64::new(target, 0.0)).norm());
        }
    }
    if worst > UNITARY_TOL {
        return Err(Error::invalid(format!(
            "rotation is not unitary: max |Q^H Q - I| = {worst:.3e}"
        )));
    }
    Ok(())
}

/// Checks load vectors against the decomposition and the noise level.
fn validate_loads(lam_u: &[f64], lam_f: &[f64], eigen: &ChannelEigen, rho: f64) -> Result<()> {
    if lam_u.len() != eigen.k || lam_f.len() != eigen.k {
        return Err(Error::invalid(format!(
            "allocation has {} / {} loads but the decomposition keeps {} streams",
            lam_u.len(),
            lam_f.len(),
            eigen.k
        )));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    for (i, (&lu, &lf)) in lam_u.iter().zip(lam_f).enumerate() {
        if !(lu.is_finite() && lu >= 0.0 && lf.is_finite() && lf >= 0.0) {
            return Err(Error::domain(format!(
                "stream {i} loads must be nonnegative and finite, got ({lu}, {lf})"
            )));
        }
    }
    Ok(())
}

/// Copy of `m` with column `j` scaled by `s[j]`.
fn scale_columns(m: &DMatrix<C64>, s: &[f64]) -> DMatrix<C64> {
    let mut out = m.clone();
    for (j, &v) in s.iter().enumerate() {
        for e in out.column_mut(j).iter_mut() {
            *e *= v;
        }
    }
    out
}

/// Hermitian part `(m + m^H) / 2`, used to strip roundoff asymmetry.
fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).map(|e| e * 0.5)
}

/// The two cascade products every receiver computation needs: the
/// equivalent stream channel `H2 F H1 U` and the colored-noise factor
/// `H2 F`.
struct Cascade {
    /// `H2 F H1 U`, destination antennas by streams.
    heffu: DMatrix<C64>,
    /// `H2 F`, destination antennas by relay antennas.
    h2f: DMatrix<C64>,
}

impl Cascade {
    /// Builds the cascade products from the stored singular structure.
    ///
    /// With `U` and `F` aligned to the top singular subspaces the full
    /// products collapse to column-scaled singular vector frames, so no
    /// channel matrix larger than the decomposition is ever formed.
    fn from_eigen(
        lam_u: &[f64],
        lam_f: &[f64],
        eigen: &ChannelEigen,
        rotation: &DMatrix<C64>,
    ) -> Self {
        let k = eigen.k;
        let mut relay_gain = Vec::with_capacity(k);
        let mut through_gain = Vec::with_capacity(k);
        for n in 0..k {
            let g2 = (eigen.lam_h2[n] * lam_f[n]).sqrt();
            relay_gain.push(g2);
            through_gain.push(g2 * (eigen.lam_h1[n] * lam_u[n]).sqrt());
        }
        let h2f = scale_columns(&eigen.omega_h2, &relay_gain) * eigen.omega_h1.adjoint();
        let heffu = scale_columns(&eigen.omega_h2, &through_gain) * rotation.adjoint();
        Self { heffu, h2f }
    }

    /// Builds the cascade products from explicit channel matrices.
    fn from_matrices(
        u: &DMatrix<C64>,
        f: &DMatrix<C64>,
        h1: &DMatrix<C64>,
        h2: &DMatrix<C64>,
    ) -> Result<Self> {
        let (m, n) = (h1.nrows(), h1.ncols());
        if h2.ncols() != m {
            return Err(Error::invalid(format!(
                "second hop must have {m} columns to follow the first, got {}",
                h2.ncols()
            )));
        }
        if f.nrows() != m || f.ncols() != m {
            return Err(Error::invalid(format!(
                "relay matrix must be {m} x {m}, got {} x {}",
                f.nrows(),
                f.ncols()
            )));
        }
        if u.nrows() != n {
            return Err(Error::invalid(format!(
                "precoder must have {n} rows to match the first hop, got {}",
                u.nrows()
            )));
        }
        let h2f = h2 * f;
        let heffu = &h2f * (h1 * u);
        Ok(Self { heffu, h2f })
    }

    /// Received-noise covariance in units of the per-antenna variance:
    /// `H2 F F^H H2^H + I`.
    fn noise_shape(&self) -> DMatrix<C64> {
        let dim = self.h2f.nrows();
        hermitian_part(&(&self.h2f * self.h2f.adjoint())) + DMatrix::identity(dim, dim)
    }
}

/// Wiener error covariance and equalizer for a given cascade.
///
/// Returns `(E, G)` with `E = (I + U^H H^H (rho R_n)^{-1} H U)^{-1}`
/// evaluated through Cholesky solves and re-symmetrized, and `G` the
/// matching linear MMSE equalizer `E U^H H^H (rho R_n)^{-1}`.
fn wiener_receiver(cascade: &Cascade, rho: f64) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let k = cascade.heffu.ncols();
    let noise = cascade.noise_shape().map(|e| e * rho);
    let chol_noise = Cholesky::new(noise).ok_or_else(|| {
        Error::Numerical("received-noise covariance lost positive definiteness".into())
    })?;
    let z = chol_noise.solve(&cascade.heffu);
    let gram = DMatrix::identity(k, k) + hermitian_part(&(cascade.heffu.adjoint() * &z));
    let chol_gram = Cholesky::new(gram)
        .ok_or_else(|| Error::Numerical("stream Gram matrix lost positive definiteness".into()))?;
    let mse = hermitian_part(&chol_gram.inverse());
    let g = &mse * z.adjoint();
    Ok((mse, g))
}

/// Error covariance of the Wiener receiver for explicit matrices.
///
/// Computes `E = (I + U^H H^H (rho R_n)^{-1} H U)^{-1}` with
/// `H = H2 F H1` and `R_n = H2 F F^H H2^H + I`, via Cholesky solves.
/// This is the matrix-level ground truth the eigen-domain allocators
/// are tested against.
pub fn mse_matrix(
    u: &DMatrix<C64>,
    f: &DMatrix<C64>,
    h1: &DMatrix<C64>,
    h2: &DMatrix<C64>,
    rho: f64,
) -> Result<DMatrix<C64>> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be positive and finite, got {rho}"
        )));
    }
    let cascade = Cascade::from_matrices(u, f, h1, h2)?;
    wiener_receiver(&cascade, rho).map(|(mse, _)| mse)
}

/// Total transmit power evaluated from matrix traces:
/// `tr(U U^H) + tr(F (H1 U U^H H1^H + rho I) F^H)`.
///
/// The second term charges the relay for both the amplified signal and
/// the amplified first-hop noise. Panics on mismatched dimensions, like
/// any other algebraic expression on these matrices.
pub fn total_power_matrices(
    u: &DMatrix<C64>,
    f: &DMatrix<C64>,
    h1: &DMatrix<C64>,
    rho: f64,
) -> f64 {
    let fh1u = f * (h1 * u);
    u.norm_squared() + fh1u.norm_squared() + rho * f.norm_squared()
}

/// Builds `U` and `F` along the top singular subspaces of the two hops.
fn assemble_precoders(
    lam_u: &[f64],
    lam_f: &[f64],
    eigen: &ChannelEigen,
    rotation: &DMatrix<C64>,
) -> (DMatrix<C64>, DMatrix<C64>) {
    let root_u: Vec<f64> = lam_u.iter().map(|&v| v.sqrt()).collect();
    let root_f: Vec<f64> = lam_f.iter().map(|&v| v.sqrt()).collect();
    let u = scale_columns(&eigen.v_h1, &root_u) * rotation.adjoint();
    let f = scale_columns(&eigen.v_h2, &root_f) * eigen.omega_h1.adjoint();
    (u, f)
}

/// Assembles the linear-receiver transceiver for an allocation.
///
/// The precoder matches the top right singular vectors of the first hop
/// scaled by the source loads and rotated by `rotation`; the relay
/// matrix connects the top subspaces of the two hops; the equalizer is
/// the Wiener filter for the resulting cascade; `mse` is its error
/// covariance, whose eigenvalues are the per-stream MSEs `lam` of the
/// allocation regardless of the rotation.
pub fn build_linear(
    alloc: &Allocation,
    eigen: &ChannelEigen,
    rho: f64,
    rotation: &DMatrix<C64>,
) -> Result<TransceiverMatrices> {
    validate_loads(&alloc.lam_u, &alloc.lam_f, eigen, rho)?;
    validate_rotation(rotation, eigen.k)?;
    let (u, f) = assemble_precoders(&alloc.lam_u, &alloc.lam_f, eigen, rotation);
    let cascade = Cascade::from_eigen(&alloc.lam_u, &alloc.lam_f, eigen, rotation);
    let (mse, g) = wiener_receiver(&cascade, rho)?;
    Ok(TransceiverMatrices {
        u,
        f,
        g,
        b_feedback: None,
        rotation: rotation.clone(),
        mse,
    })
}

/// Assembles the decision-feedback transceiver for a log-domain
/// allocation.
///
/// `U` and `F` take the same subspace-aligned form as in the linear
/// design. The receive Gram matrix
/// `U^H H^H R_n^{-1} H U + rho I` is factored as `L L^H`; the feedback
/// filter is `B = D L^H - I` with `D = diag(1 / L_nn)`, which is
/// strictly upper triangular with an exactly zero diagonal, and the
/// forward filter is `D L^H` applied after the Wiener equalizer. With
/// correct past decisions the error covariance is the diagonal matrix
/// `rho D^2`, so the identity rotation reproduces the per-stream MSEs
/// `exp(theta)` of the allocation.
pub fn build_dfe(
    alloc: &ThetaAllocation,
    eigen: &ChannelEigen,
    rho: f64,
    rotation: &DMatrix<C64>,
) -> Result<TransceiverMatrices> {
    validate_loads(&alloc.lam_u, &alloc.lam_f, eigen, rho)?;
    validate_rotation(rotation, eigen.k)?;
    let k = eigen.k;
    let (u, f) = assemble_precoders(&alloc.lam_u, &alloc.lam_f, eigen, rotation);
    let cascade = Cascade::from_eigen(&alloc.lam_u, &alloc.lam_f, eigen, rotation);

    let chol_noise = Cholesky::new(cascade.noise_shape()).ok_or_else(|| {
        Error::Numerical("received-noise covariance lost positive definiteness".into())
    })?;
    let z = chol_noise.solve(&cascade.heffu);
    let gram = hermitian_part(&(cascade.heffu.adjoint() * &z))
        + DMatrix::identity(k, k).map(|e: C64| e * rho);
    let chol_gram = Cholesky::new(gram)
        .ok_or_else(|| Error::Numerical("receive Gram matrix lost positive definiteness".into()))?;
    let l = chol_gram.l();

    let mut feedback = DMatrix::<C64>::zeros(k, k);
    let mut mse_diag = Vec::with_capacity(k);
    for r in 0..k {
        let pivot = l[(r, r)].re;
        if !(pivot.is_finite() && pivot > 0.0) {
            return Err(Error::Numerical(format!(
                "triangular factor has a nonpositive pivot at stream {r}"
            )));
        }
        for c in (r + 1)..k {
            feedback[(r, c)] = l[(c, r)].conj() / pivot;
        }
        mse_diag.push(rho / (pivot * pivot));
    }
    let forward_shaper = DMatrix::identity(k, k) + &feedback;

    let (_, wiener) = wiener_receiver(&cascade, rho)?;
    let g = &forward_shaper * wiener;
    let mse = DMatrix::from_fn(k, k, |r, c| {
        if r == c {
            C64::new(mse_diag[r], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(TransceiverMatrices {
        u,
        f,
        g,
        b_feedback: Some(feedback),
        rotation: rotation.clone(),
        mse,
    })
}
