//! Hermitian eigen-decomposition, matrix functions and the real embedding.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::fock::{hermitian_part, CMat, C64};

// nalgebra 0.33's symmetric eigensolver loses accuracy (reconstruction errors
// up to 1e-4) on block-structured inputs; faer's divide-and-conquer does not.

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let n = h.nrows();
    let fm = Mat::<C64>::from_fn(n, n, |i, j| h[(i, j)]);
    let Ok(e) = fm.self_adjoint_eigen(Side::Lower) else {
        return eigh_fallback(h);
    };
    let (u, s) = (e.U(), e.S());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    let vals = idx.iter().map(|&k| s[k].re).collect();
    let vecs = CMat::from_fn(n, n, |i, c| u[(i, idx[c])]);
    (vals, vecs)
}

fn eigh_fallback(h: CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |i, c| eig.eigenvectors[(i, idx[c])]);
    (vals, vecs)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let n = h.nrows();
    let fm = Mat::<C64>::from_fn(n, n, |i, j| h[(i, j)]);
    let mut v: Vec<f64> = match fm.self_adjoint_eigenvalues(Side::Lower) {
        Ok(v) => v,
        Err(_) => return eigh_fallback(h).0,
    };
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn eigvalsh_real(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let fm = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v: Vec<f64> = match fm.self_adjoint_eigenvalues(Side::Lower) {
        Ok(v) => v,
        Err(_) => SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect(),
    };
    v.sort_by(f64::total_cmp);
    v
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m).first().copied().unwrap_or(0.0)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m).last().copied().unwrap_or(0.0)
}

/// `V diag(f(lambda)) V^dagger`.
pub fn apply_spectral(vals: &[f64], vecs: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        let fv = f(v);
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Hermitian function `f(M)`.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    hermitian_part(&apply_spectral(&vals, &vecs, f))
}

/// PSD square root with negative eigenvalues clipped to zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    hermitian_fn(m, |v| v.max(0.0).sqrt())
}

/// Projection onto the PSD cone.
pub fn psd_part(m: &CMat) -> CMat {
    hermitian_fn(m, |v| v.max(0.0))
}

/// `Tr[M log2 M]` with eigenvalues below `floor` contributing zero.
pub fn trace_xlogx(m: &CMat, floor: f64) -> f64 {
    eigvalsh(m).iter().filter(|&&v| v > floor).map(|&v| v * v.log2()).sum()
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> f64 {
    eigvalsh(m).iter().map(|v| v.abs()).sum()
}

/// Real-symmetric embedding `[[Re, -Im], [Im, Re]]`.
pub fn embed(h: &CMat) -> DMatrix<f64> {
    let n = h.nrows();
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            r[(i, j)] = z.re;
            r[(i + n, j + n)] = z.re;
            r[(i + n, j)] = z.im;
            r[(i, j + n)] = -z.im;
        }
    }
    r
}

/// Inverse of [`embed`], averaging the redundant copies.
pub fn extract(r: &DMatrix<f64>) -> CMat {
    let n = r.nrows() / 2;
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (r[(i, j)] + r[(i + n, j + n)]);
            let im = 0.5 * (r[(i + n, j)] - r[(i, j + n)]);
            h[(i, j)] = C64::new(re, im);
        }
    }
    h
}

/// Orthonormal basis of the real vector space of `d x d` Hermitian matrices.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        let mut m = CMat::zeros(d, d);
        m[(i, i)] = C64::new(1.0, 0.0);
        out.push(m);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut m = CMat::zeros(d, d);
            m[(i, j)] = C64::new(s, 0.0);
            m[(j, i)] = C64::new(s, 0.0);
            out.push(m);
            let mut m = CMat::zeros(d, d);
            m[(i, j)] = C64::new(0.0, -s);
            m[(j, i)] = C64::new(0.0, s);
            out.push(m);
        }
    }
    out
}

/// Coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coords(m: &CMat) -> DVector<f64> {
    let d = m.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut v = Vec::with_capacity(d * d);
    for i in 0..d {
        v.push(m[(i, i)].re);
    }
    for i in 0..d {
        for j in i + 1..d {
            v.push(s * m[(i, j)].re);
            v.push(-s * m[(i, j)].im);
        }
    }
    DVector::from_vec(v)
}
