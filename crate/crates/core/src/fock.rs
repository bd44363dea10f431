//! Truncated Fock-space operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar.
pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = DMatrix<C64>;
/// Dense complex vector.
pub type CVec = DVector<C64>;

/// Entrywise tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense Hermitian operator on a truncated Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOp {
    entries: CMat,
    label: String,
}

impl HermitianOp {
    /// Validates Hermiticity to [`HERMITIAN_TOL`] and stores the exact Hermitian part.
    pub fn new(entries: CMat, label: impl Into<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension(format!(
                "{}x{} is not square",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self::symmetrized(entries, label))
    }

    /// Stores `(M + M^dagger)/2` without checking the deviation.
    pub fn symmetrized(entries: CMat, label: impl Into<String>) -> Self {
        Self { entries: hermitian_part(&entries), label: label.into() }
    }

    /// Identity on `dim` levels.
    pub fn identity(dim: usize) -> Self {
        Self { entries: CMat::identity(dim, dim), label: "identity".into() }
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Matrix entries.
    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    /// Provenance label.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Consumes the operator, returning its matrix.
    pub fn into_matrix(self) -> CMat {
        self.entries
    }

    /// Real trace.
    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// `Re Tr[self rho]`.
    pub fn expectation(&self, rho: &CMat) -> f64 {
        trace_product(&self.entries, rho)
    }
}

/// Largest entrywise deviation `|M_ij - conj(M_ji)|`.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `(M + M^dagger)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// `Re Tr[A B]` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Photon-number cutoff and internal padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationSpec {
    /// Cutoff; the truncated space has `n_c + 1` levels.
    pub n_c: usize,
    /// Extra levels used before projecting; `None` selects a default per operator.
    pub pad: Option<usize>,
}

impl TruncationSpec {
    /// Validated constructor.
    pub fn new(n_c: usize, pad: Option<usize>) -> Result<Self> {
        if n_c < 1 {
            return Err(Error::InvalidParameter("n_c must be at least 1".into()));
        }
        Ok(Self { n_c, pad })
    }

    /// Dimension of the truncated space.
    pub fn dim(&self) -> usize {
        self.n_c + 1
    }

    /// Padding for a polynomial of `degree` in `a, a^dagger` displaced by `beta`.
    pub fn pad_for(&self, beta: C64, degree: usize) -> usize {
        self.pad.unwrap_or(2 * degree + (4.0 * beta.norm()).ceil() as usize)
    }
}

/// Annihilation and creation matrices on `dim` levels.
pub fn ladder_matrices(dim: usize) -> (CMat, CMat) {
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    (a, adag)
}

/// Displaced number operator `n_beta = (a - beta)^dagger (a - beta)` or its square.
pub fn displaced_number_op(beta: C64, degree: usize, spec: &TruncationSpec) -> Result<HermitianOp> {
    if degree != 1 && degree != 2 {
        return Err(Error::Domain(format!("degree must be 1 or 2, got {degree}")));
    }
    let d = spec.dim();
    let big = d + spec.pad_for(beta, degree);
    let (a, _) = ladder_matrices(big);
    let shifted = &a - CMat::identity(big, big) * beta;
    let nb = shifted.adjoint() * &shifted;
    let full = if degree == 1 { nb } else { &nb * &nb };
    let sub = full.view((0, 0), (d, d)).into_owned();
    Ok(HermitianOp::symmetrized(sub, format!("n_beta^{degree}(beta={beta})")))
}

/// Coherent-state amplitudes `e^{-|alpha|^2/2} alpha^n / sqrt(n!)` for `n < dim`.
pub fn coherent_ket(alpha: C64, dim: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    if dim == 0 {
        return v;
    }
    v[0] = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 1..dim {
        v[n] = v[n - 1] * alpha / (n as f64).sqrt();
    }
    v
}

/// Exact matrix elements `<m|D(beta)|n>` for `m, n < dim`.
///
/// Columns follow `D|n> = (a^dagger - beta^*) D|n-1> / sqrt(n)`, which only
/// couples row `k` to rows `k` and `k-1`, so no truncation error enters.
pub fn displacement_matrix(beta: C64, dim: usize) -> CMat {
    let mut d = CMat::zeros(dim, dim);
    d.set_column(0, &coherent_ket(beta, dim));
    for n in 1..dim {
        let inv = 1.0 / (n as f64).sqrt();
        for k in 0..dim {
            let up = if k > 0 { d[(k - 1, n - 1)] * (k as f64).sqrt() } else { C64::new(0.0, 0.0) };
            d[(k, n)] = (up - beta.conj() * d[(k, n - 1)]) * inv;
        }
    }
    d
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Partial trace over the second factor of a `d_a * d_b` operator.
pub fn partial_trace_b(op: &CMat, d_a: usize, d_b: usize) -> Result<CMat> {
    if op.nrows() != d_a * d_b || op.ncols() != d_a * d_b {
        return Err(Error::Dimension(format!(
            "operator is {}x{}, expected {}",
            op.nrows(),
            op.ncols(),
            d_a * d_b
        )));
    }
    let mut out = CMat::zeros(d_a, d_a);
    for i in 0..d_a {
        for j in 0..d_a {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d_b {
                acc += op[(i * d_b + k, j * d_b + k)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}
