//! Dense primal-dual interior-point method for standard-form conic programs
//! over products of real-symmetric PSD cones and the nonnegative orthant.
//!
//! Primal: `min <C, X> s.t. <A_i, X> = b_i, X in K`.
//! Dual:   `max b^T y s.t. C - sum_i y_i A_i = Z in K`.
//!
//! Search directions use the HKM scaling with a Mehrotra predictor-corrector.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric sparse matrix stored as a full list of `(row, col, value)` triplets.
///
/// Both `(i, j)` and `(j, i)` must be present for off-diagonal entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    /// Triplets, duplicates allowed (summed).
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Triplets of a dense symmetric matrix, dropping exact zeros.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    /// Dense `n x n` copy.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// `<self, K> = Tr[self K]` for a square (not necessarily symmetric) `K`.
    pub fn inner(&self, k: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, v)| v * k[(j, i)]).sum()
    }
}

/// One equality constraint `sum_b <A_b, X_b> + sum_l a_l x_l = rhs`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintRow {
    /// Terms on PSD blocks.
    pub blocks: Vec<(usize, SparseSym)>,
    /// Terms on nonnegative scalar variables.
    pub lp: Vec<(usize, f64)>,
    /// Right-hand side.
    pub rhs: f64,
}

/// Standard-form conic program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    /// Orders of the PSD blocks.
    pub block_dims: Vec<usize>,
    /// Number of nonnegative scalar variables.
    pub lp_dim: usize,
    /// Objective on each PSD block (symmetric).
    pub c_blocks: Vec<DMatrix<f64>>,
    /// Objective on the scalar variables.
    pub c_lp: Vec<f64>,
    /// Equality constraints.
    pub rows: Vec<ConstraintRow>,
}

impl ConicProblem {
    /// Checks block indices, dimensions and symmetry of the data.
    pub fn validate(&self) -> Result<()> {
        if self.c_blocks.len() != self.block_dims.len() || self.c_lp.len() != self.lp_dim {
            return Err(Error::Dimension("objective does not match cone dimensions".into()));
        }
        for (c, &n) in self.c_blocks.iter().zip(&self.block_dims) {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Dimension("objective block has wrong order".into()));
            }
        }
        for (k, row) in self.rows.iter().enumerate() {
            for (b, a) in &row.blocks {
                let n = *self
                    .block_dims
                    .get(*b)
                    .ok_or_else(|| Error::Dimension(format!("row {k} references block {b}")))?;
                if a.entries.iter().any(|&(i, j, _)| i >= n || j >= n) {
                    return Err(Error::Dimension(format!("row {k} entry outside block {b}")));
                }
                let d = a.to_dense(n);
                if (&d - d.transpose()).amax() > 1e-12 * (1.0 + d.amax()) {
                    return Err(Error::Dimension(format!("row {k} block {b} not symmetric")));
                }
            }
            if row.lp.iter().any(|&(l, _)| l >= self.lp_dim) {
                return Err(Error::Dimension(format!("row {k} references missing scalar")));
            }
        }
        Ok(())
    }

    /// Total barrier parameter `sum n_b + lp_dim`.
    fn nu(&self) -> f64 {
        (self.block_dims.iter().sum::<usize>() + self.lp_dim) as f64
    }
}

/// Termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    /// Gap and residuals below tolerance.
    Optimal,
    /// Stopped early with gap and residuals below the square root of the tolerance.
    NearOptimal,
    /// The dual objective diverges: no primal feasible point.
    PrimalInfeasible,
    /// The primal objective diverges: no dual feasible point.
    DualInfeasible,
    /// Iteration limit reached.
    MaxIter,
    /// Linear algebra breakdown.
    NumericalFailure,
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    /// Primal PSD blocks.
    pub x_blocks: Vec<DMatrix<f64>>,
    /// Primal scalars.
    pub x_lp: Vec<f64>,
    /// Dual multipliers.
    pub y: Vec<f64>,
    /// Dual slack blocks.
    pub z_blocks: Vec<DMatrix<f64>>,
    /// Dual scalar slacks.
    pub z_lp: Vec<f64>,
    /// `<C, X>`.
    pub primal_obj: f64,
    /// `b^T y`.
    pub dual_obj: f64,
    /// `|p - d| / (1 + |p| + |d|)`.
    pub rel_gap: f64,
    /// Relative primal residual.
    pub primal_residual: f64,
    /// Relative dual residual.
    pub dual_residual: f64,
    /// Termination status.
    pub status: ConicStatus,
    /// Iterations used.
    pub iterations: usize,
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicSettings {
    /// Target for the relative gap and residuals.
    pub tol: f64,
    /// Iteration limit.
    pub max_iter: usize,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for ConicSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 100, verbose: false }
    }
}

/// Conic backend.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Backend {
    /// Built-in interior-point method.
    #[default]
    Internal,
    /// External program reading SDPA sparse input and writing a CSDP-style solution.
    External {
        /// Executable invoked as `program <problem.dat-s> <solution.sol>`.
        program: String,
    },
}

/// Environment variable naming the external solver executable.
pub const EXTERNAL_SOLVER_ENV: &str = "CVQKD_EXTERNAL_SOLVER";
/// Environment variable selecting the default backend (`internal` or `external`).
pub const BACKEND_ENV: &str = "CVQKD_CONIC_BACKEND";

impl Backend {
    /// Backend from a name; `external` reads the program from [`EXTERNAL_SOLVER_ENV`].
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "internal" => Ok(Backend::Internal),
            "external" => {
                let program = std::env::var(EXTERNAL_SOLVER_ENV).map_err(|_| {
                    Error::Config(format!("external backend needs {EXTERNAL_SOLVER_ENV} to name a solver"))
                })?;
                Ok(Backend::External { program })
            }
            other => Err(Error::Config(format!("unknown backend '{other}'"))),
        }
    }

    /// Backend selected by [`BACKEND_ENV`], defaulting to internal.
    pub fn from_env() -> Result<Self> {
        match std::env::var(BACKEND_ENV) {
            Ok(name) => Self::from_name(&name),
            Err(_) => Ok(Backend::Internal),
        }
    }

    /// Solves `problem` with this backend.
    pub fn solve(&self, problem: &ConicProblem, settings: &ConicSettings) -> Result<ConicSolution> {
        match self {
            Backend::Internal => solve(problem, settings),
            Backend::External { program } => solve_external(problem, program),
        }
    }
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    zl: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    dzl: DVector<f64>,
}

fn apply_a(p: &ConicProblem, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        p.rows.len(),
        p.rows.iter().map(|r| {
            r.blocks.iter().map(|(b, a)| a.inner(&x[*b])).sum::<f64>()
                + r.lp.iter().map(|&(l, v)| v * xl[l]).sum::<f64>()
        }),
    )
}

fn apply_at(p: &ConicProblem, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
    let mut blocks: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut lp = DVector::zeros(p.lp_dim);
    for (r, &yi) in p.rows.iter().zip(y.iter()) {
        if yi == 0.0 {
            continue;
        }
        for (b, a) in &r.blocks {
            for &(i, j, v) in &a.entries {
                blocks[*b][(i, j)] += yi * v;
            }
        }
        for &(l, v) in &r.lp {
            lp[l] += yi * v;
        }
    }
    (blocks, lp)
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(sym(m)).map(|c| sym(&c.inverse()))
}

/// Largest `alpha` with `X + alpha dX` PSD (infinity when unbounded).
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::INFINITY;
    }
    let Some(ch) = Cholesky::new(sym(x)) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let m = sym(&(&linv * dx * linv.transpose()));
    let lmin = crate::linalg::eigvalsh_real(&m).first().copied().unwrap_or(0.0);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Schur complement `M_ij = <A_i, X A_j Z^-1> + sum_l a_il a_jl x_l / z_l`.
fn schur(p: &ConicProblem, it: &Iterate, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = p.rows.len();
    let mut mat = DMatrix::zeros(m, m);
    // Rows touching each block, for the sparse route.
    let nnz_block: Vec<usize> = (0..p.block_dims.len())
        .map(|b| {
            p.rows
                .iter()
                .flat_map(|r| r.blocks.iter().filter(|(bb, _)| *bb == b))
                .map(|(_, a)| a.entries.len())
                .sum()
        })
        .collect();
    for (j, rj) in p.rows.iter().enumerate() {
        for (b, aj) in &rj.blocks {
            let n = p.block_dims[*b];
            let x = &it.x[*b];
            let zi = &zinv[*b];
            let nnz_j = aj.entries.len();
            let dense_cost = n * nnz_j + n * n * n + nnz_block[*b];
            let sparse_cost = nnz_block[*b] * nnz_j;
            if sparse_cost <= dense_cost {
                for (i, ri) in p.rows.iter().enumerate() {
                    for (bi, ai) in &ri.blocks {
                        if bi != b {
                            continue;
                        }
                        let mut acc = 0.0;
                        for &(pp, q, a) in &ai.entries {
                            for &(r, s, c) in &aj.entries {
                                acc += a * c * x[(q, r)] * zi[(s, pp)];
                            }
                        }
                        mat[(i, j)] += acc;
                    }
                }
            } else {
                let mut xa = DMatrix::zeros(n, n);
                for &(r, s, c) in &aj.entries {
                    let col = x.column(r) * c;
                    let mut target = xa.column_mut(s);
                    target += col;
                }
                let w = xa * zi;
                for (i, ri) in p.rows.iter().enumerate() {
                    for (bi, ai) in &ri.blocks {
                        if bi == b {
                            mat[(i, j)] += ai.inner(&w);
                        }
                    }
                }
            }
        }
    }
    // Scalar part.
    let ratio: Vec<f64> = it.xl.iter().zip(it.zl.iter()).map(|(x, z)| x / z).collect();
    for (i, ri) in p.rows.iter().enumerate() {
        for (j, rj) in p.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(li, vi) in &ri.lp {
                for &(lj, vj) in &rj.lp {
                    if li == lj {
                        acc += vi * vj * ratio[li];
                    }
                }
            }
            mat[(i, j)] += acc;
        }
    }
    sym(&mat)
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdl: DVector<f64>,
}

fn residuals(p: &ConicProblem, it: &Iterate) -> Residuals {
    let b = DVector::from_iterator(p.rows.len(), p.rows.iter().map(|r| r.rhs));
    let rp = b - apply_a(p, &it.x, &it.xl);
    let (aty, atyl) = apply_at(p, &it.y);
    let rd = (0..p.block_dims.len()).map(|k| &p.c_blocks[k] - &aty[k] - &it.z[k]).collect();
    let rdl = DVector::from_vec(p.c_lp.clone()) - atyl - &it.zl;
    Residuals { rp, rd, rdl }
}

/// Direction for target `tau` with second-order corrections `corr` (blocks) and `corrl`.
#[allow(clippy::too_many_arguments)]
fn direction(
    p: &ConicProblem,
    it: &Iterate,
    res: &Residuals,
    zinv: &[DMatrix<f64>],
    schur_m: &DMatrix<f64>,
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tau: f64,
    corr: Option<(&[DMatrix<f64>], &DVector<f64>)>,
) -> Option<Direction> {
    let nb = p.block_dims.len();
    // R_b = tau Z^-1 - X - K Z^-1 - X Rd Z^-1
    let mut r_blocks = Vec::with_capacity(nb);
    for k in 0..nb {
        let mut r = &zinv[k] * tau - &it.x[k] - &it.x[k] * &res.rd[k] * &zinv[k];
        if let Some((c, _)) = corr {
            r -= &c[k] * &zinv[k];
        }
        r_blocks.push(r);
    }
    let mut rl = DVector::zeros(p.lp_dim);
    for l in 0..p.lp_dim {
        let mut v = tau / it.zl[l] - it.xl[l] - it.xl[l] * res.rdl[l] / it.zl[l];
        if let Some((_, cl)) = corr {
            v -= cl[l] / it.zl[l];
        }
        rl[l] = v;
    }
    let rhs = &res.rp - apply_a(p, &r_blocks, &rl);
    let mut dy = lu.solve(&rhs)?;
    for _ in 0..2 {
        let r = &rhs - schur_m * &dy;
        dy += lu.solve(&r)?;
    }
    let (aty, atyl) = apply_at(p, &dy);
    let mut dz = Vec::with_capacity(nb);
    let mut dx = Vec::with_capacity(nb);
    for k in 0..nb {
        let dzk = &res.rd[k] - &aty[k];
        let mut dxk = &zinv[k] * tau - &it.x[k] - &it.x[k] * &dzk * &zinv[k];
        if let Some((c, _)) = corr {
            dxk -= &c[k] * &zinv[k];
        }
        dx.push(sym(&dxk));
        dz.push(sym(&dzk));
    }
    let dzl = &res.rdl - atyl;
    let mut dxl = DVector::zeros(p.lp_dim);
    for l in 0..p.lp_dim {
        let mut v = tau / it.zl[l] - it.xl[l] - it.xl[l] * dzl[l] / it.zl[l];
        if let Some((_, cl)) = corr {
            v -= cl[l] / it.zl[l];
        }
        dxl[l] = v;
    }
    Some(Direction { dx, dxl, dy, dz, dzl })
}

fn step_lengths(it: &Iterate, d: &Direction) -> (f64, f64) {
    let mut ap = max_step_lp(&it.xl, &d.dxl);
    let mut ad = max_step_lp(&it.zl, &d.dzl);
    for k in 0..it.x.len() {
        ap = ap.min(max_step_psd(&it.x[k], &d.dx[k]));
        ad = ad.min(max_step_psd(&it.z[k], &d.dz[k]));
    }
    (ap, ad)
}

fn inner_xz(x: &[DMatrix<f64>], xl: &DVector<f64>, z: &[DMatrix<f64>], zl: &DVector<f64>) -> f64 {
    x.iter().zip(z).map(|(a, b)| a.dot(b)).sum::<f64>() + xl.dot(zl)
}

/// Solves `problem` with the internal interior-point method.
pub fn solve(p: &ConicProblem, settings: &ConicSettings) -> Result<ConicSolution> {
    p.validate()?;
    let m = p.rows.len();
    let nb = p.block_dims.len();
    let nu = p.nu();
    if nu == 0.0 {
        return Err(Error::Dimension("empty cone".into()));
    }
    let bvec = DVector::from_iterator(m, p.rows.iter().map(|r| r.rhs));
    let b_norm = bvec.norm();
    let c_norm = (p.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>()
        + p.c_lp.iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    let a_norm_max = p
        .rows
        .iter()
        .map(|r| {
            (r.blocks.iter().map(|(_, a)| a.entries.iter().map(|e| e.2 * e.2).sum::<f64>()).sum::<f64>()
                + r.lp.iter().map(|e| e.1 * e.1).sum::<f64>())
            .sqrt()
        })
        .fold(0.0, f64::max);
    let sqrt_n = nu.sqrt();
    let xi_p = p
        .rows
        .iter()
        .map(|r| {
            let an = (r.blocks.iter().map(|(_, a)| a.entries.iter().map(|e| e.2 * e.2).sum::<f64>()).sum::<f64>()
                + r.lp.iter().map(|e| e.1 * e.1).sum::<f64>())
            .sqrt();
            sqrt_n * (1.0 + r.rhs.abs()) / (1.0 + an)
        })
        .fold(10f64.max(sqrt_n), f64::max);
    let xi_d = 10f64.max(sqrt_n).max(c_norm).max(a_norm_max);
    let mut it = Iterate {
        x: p.block_dims.iter().map(|&n| DMatrix::identity(n, n) * xi_p).collect(),
        xl: DVector::from_element(p.lp_dim, xi_p),
        y: DVector::zeros(m),
        z: p.block_dims.iter().map(|&n| DMatrix::identity(n, n) * xi_d).collect(),
        zl: DVector::from_element(p.lp_dim, xi_d),
    };

    let mut status = ConicStatus::MaxIter;
    let mut iterations = 0;
    let mut last = (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    let mut best_merit = f64::INFINITY;
    let mut stall = 0;
    for iter in 0..settings.max_iter {
        iterations = iter;
        let res = residuals(p, &it);
        let pobj = p.c_blocks.iter().zip(&it.x).map(|(c, x)| c.dot(x)).sum::<f64>()
            + DVector::from_vec(p.c_lp.clone()).dot(&it.xl);
        let dobj = bvec.dot(&it.y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pres = res.rp.norm() / (1.0 + b_norm);
        let dres = (res.rd.iter().map(|r| r.norm_squared()).sum::<f64>() + res.rdl.norm_squared()).sqrt()
            / (1.0 + c_norm);
        last = (pobj, dobj, gap, pres, dres);
        if settings.verbose {
            eprintln!("{iter:3} p={pobj:+.9e} d={dobj:+.9e} gap={gap:.2e} pres={pres:.2e} dres={dres:.2e}");
        }
        if gap <= settings.tol && pres <= settings.tol && dres <= settings.tol {
            status = ConicStatus::Optimal;
            break;
        }
        let merit = gap.max(pres).max(dres);
        if merit < 0.5 * best_merit {
            best_merit = merit;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 8 {
                status = ConicStatus::NumericalFailure;
                break;
            }
        }
        // Divergence of the dual objective with small dual residual certifies
        // primal infeasibility; symmetric for the primal.
        let y_norm = it.y.norm();
        if dres <= 1e-6 && dobj > 1e8 * (1.0 + c_norm) && y_norm > 1e8 {
            status = ConicStatus::PrimalInfeasible;
            break;
        }
        let x_norm = it.x.iter().map(|x| x.norm()).sum::<f64>() + it.xl.norm();
        if pres <= 1e-6 && pobj < -1e8 * (1.0 + b_norm) && x_norm > 1e8 {
            status = ConicStatus::DualInfeasible;
            break;
        }
        let mu = inner_xz(&it.x, &it.xl, &it.z, &it.zl) / nu;
        let mut zinv = Vec::with_capacity(nb);
        for z in &it.z {
            match spd_inverse(z) {
                Some(zi) => zinv.push(zi),
                None => {
                    status = ConicStatus::NumericalFailure;
                    break;
                }
            }
        }
        if zinv.len() != nb {
            break;
        }
        let mut schur_m = schur(p, &it, &zinv);
        let reg = 1e-15 * schur_m.diagonal().amax().max(1e-300);
        for i in 0..m {
            schur_m[(i, i)] += reg;
        }
        let lu = schur_m.clone().lu();
        // Predictor.
        let Some(aff) = direction(p, &it, &res, &zinv, &schur_m, &lu, 0.0, None) else {
            status = ConicStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = step_lengths(&it, &aff);
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let xs: Vec<DMatrix<f64>> = (0..nb).map(|k| &it.x[k] + &aff.dx[k] * ap).collect();
        let zs: Vec<DMatrix<f64>> = (0..nb).map(|k| &it.z[k] + &aff.dz[k] * ad).collect();
        let mu_aff = inner_xz(&xs, &(&it.xl + &aff.dxl * ap), &zs, &(&it.zl + &aff.dzl * ad)) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        // Corrector.
        let corr: Vec<DMatrix<f64>> = (0..nb).map(|k| &aff.dx[k] * &aff.dz[k]).collect();
        let corrl = aff.dxl.component_mul(&aff.dzl);
        let Some(d) = direction(p, &it, &res, &zinv, &schur_m, &lu, sigma * mu, Some((&corr, &corrl))) else {
            status = ConicStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = step_lengths(&it, &d);
        let gamma = 0.95;
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if !(ap > 1e-14 && ad > 1e-14) || !ap.is_finite() || !ad.is_finite() {
            status = ConicStatus::NumericalFailure;
            break;
        }
        for k in 0..nb {
            it.x[k] = sym(&(&it.x[k] + &d.dx[k] * ap));
            it.z[k] = sym(&(&it.z[k] + &d.dz[k] * ad));
        }
        it.xl += &d.dxl * ap;
        it.zl += &d.dzl * ad;
        it.y += &d.dy * ad;
        iterations = iter + 1;
    }
    let (pobj, dobj, gap, pres, dres) = last;
    let loose = settings.tol.sqrt();
    if matches!(status, ConicStatus::NumericalFailure | ConicStatus::MaxIter)
        && gap <= loose
        && pres <= loose
        && dres <= loose
    {
        status = ConicStatus::NearOptimal;
    }
    Ok(ConicSolution {
        x_blocks: it.x,
        x_lp: it.xl.iter().copied().collect(),
        y: it.y.iter().copied().collect(),
        z_blocks: it.z,
        z_lp: it.zl.iter().copied().collect(),
        primal_obj: pobj,
        dual_obj: dobj,
        rel_gap: gap,
        primal_residual: pres,
        dual_residual: dres,
        status,
        iterations,
    })
}

/// Writes `problem` in SDPA sparse format (maximisation of `<-C, X>`).
///
/// Scalar variables become a trailing diagonal block of negative size.
pub fn write_sdpa(p: &ConicProblem, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let has_lp = p.lp_dim > 0;
    let nblocks = p.block_dims.len() + usize::from(has_lp);
    writeln!(f, "\"standard-form conic program\"")?;
    writeln!(f, "{}", p.rows.len())?;
    writeln!(f, "{nblocks}")?;
    let mut dims: Vec<String> = p.block_dims.iter().map(|d| d.to_string()).collect();
    if has_lp {
        dims.push(format!("-{}", p.lp_dim));
    }
    writeln!(f, "{}", dims.join(" "))?;
    let rhs: Vec<String> = p.rows.iter().map(|r| format!("{:e}", r.rhs)).collect();
    writeln!(f, "{}", rhs.join(" "))?;
    let lp_block = p.block_dims.len() + 1;
    for (b, c) in p.c_blocks.iter().enumerate() {
        for j in 0..c.ncols() {
            for i in 0..=j {
                if c[(i, j)] != 0.0 {
                    writeln!(f, "0 {} {} {} {:e}", b + 1, i + 1, j + 1, -c[(i, j)])?;
                }
            }
        }
    }
    for (l, &v) in p.c_lp.iter().enumerate() {
        if v != 0.0 {
            writeln!(f, "0 {lp_block} {} {} {:e}", l + 1, l + 1, -v)?;
        }
    }
    for (k, row) in p.rows.iter().enumerate() {
        for (b, a) in &row.blocks {
            let d = a.to_dense(p.block_dims[*b]);
            for j in 0..d.ncols() {
                for i in 0..=j {
                    if d[(i, j)] != 0.0 {
                        writeln!(f, "{} {} {} {} {:e}", k + 1, b + 1, i + 1, j + 1, d[(i, j)])?;
                    }
                }
            }
        }
        let mut lp = vec![0.0; p.lp_dim];
        for &(l, v) in &row.lp {
            lp[l] += v;
        }
        for (l, v) in lp.iter().enumerate() {
            if *v != 0.0 {
                writeln!(f, "{} {lp_block} {} {} {:e}", k + 1, l + 1, l + 1, v)?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

/// Parses a CSDP-style solution file into a [`ConicSolution`].
pub fn read_csdp_solution(p: &ConicProblem, text: &str) -> Result<ConicSolution> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| Error::Solver("empty solution file".into()))?;
    let parse = |s: &str| -> Result<f64> {
        s.replace(['D', 'd'], "e").parse::<f64>().map_err(|e| Error::Solver(format!("bad number '{s}': {e}")))
    };
    let y_ext: Vec<f64> = first.split_whitespace().map(parse).collect::<Result<_>>()?;
    if y_ext.len() != p.rows.len() {
        return Err(Error::Solver("solution y has wrong length".into()));
    }
    let mut x: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut z = x.clone();
    let mut xl = vec![0.0; p.lp_dim];
    let mut zl = vec![0.0; p.lp_dim];
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 5 {
            return Err(Error::Solver(format!("bad solution line '{line}'")));
        }
        let which: usize = t[0].parse().map_err(|_| Error::Solver(format!("bad line '{line}'")))?;
        let blk: usize = t[1].parse().map_err(|_| Error::Solver(format!("bad line '{line}'")))?;
        let i: usize = t[2].parse().map_err(|_| Error::Solver(format!("bad line '{line}'")))?;
        let j: usize = t[3].parse().map_err(|_| Error::Solver(format!("bad line '{line}'")))?;
        let v = parse(t[4])?;
        if blk == 0 || i == 0 || j == 0 {
            return Err(Error::Solver(format!("bad indices in '{line}'")));
        }
        if blk <= p.block_dims.len() {
            let target = if which == 1 { &mut z[blk - 1] } else { &mut x[blk - 1] };
            target[(i - 1, j - 1)] = v;
            target[(j - 1, i - 1)] = v;
        } else {
            let target = if which == 1 { &mut zl } else { &mut xl };
            target[i - 1] = v;
        }
    }
    // The external dual is `min a^T y, sum y_i A_i + C = Z`; ours uses `-y`.
    let y: Vec<f64> = y_ext.iter().map(|v| -v).collect();
    let primal_obj = p.c_blocks.iter().zip(&x).map(|(c, x)| c.dot(x)).sum::<f64>()
        + p.c_lp.iter().zip(&xl).map(|(c, x)| c * x).sum::<f64>();
    let dual_obj: f64 = p.rows.iter().zip(&y).map(|(r, y)| r.rhs * y).sum();
    let rel_gap = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs());
    let it = Iterate {
        x: x.clone(),
        xl: DVector::from_vec(xl.clone()),
        y: DVector::from_vec(y.clone()),
        z: z.clone(),
        zl: DVector::from_vec(zl.clone()),
    };
    let res = residuals(p, &it);
    let b_norm = p.rows.iter().map(|r| r.rhs * r.rhs).sum::<f64>().sqrt();
    Ok(ConicSolution {
        x_blocks: x,
        x_lp: xl,
        y,
        z_blocks: z,
        z_lp: zl,
        primal_obj,
        dual_obj,
        rel_gap,
        primal_residual: res.rp.norm() / (1.0 + b_norm),
        dual_residual: (res.rd.iter().map(|r| r.norm_squared()).sum::<f64>() + res.rdl.norm_squared()).sqrt(),
        status: if rel_gap <= 1e-8 { ConicStatus::Optimal } else { ConicStatus::NumericalFailure },
        iterations: 0,
    })
}

fn solve_external(p: &ConicProblem, program: &str) -> Result<ConicSolution> {
    p.validate()?;
    let dir = std::env::temp_dir().join(format!("cvqkd-sdp-{}-{:?}", std::process::id(), std::thread::current().id()));
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("problem.dat-s");
    let output = dir.join("solution.sol");
    write_sdpa(p, &input)?;
    let status = std::process::Command::new(program).arg(&input).arg(&output).output()?;
    if !output.exists() {
        return Err(Error::Solver(format!(
            "external solver '{program}' produced no solution (exit {:?})",
            status.status.code()
        )));
    }
    let text = std::fs::read_to_string(&output)?;
    let sol = read_csdp_solution(p, &text);
    let _ = std::fs::remove_dir_all(&dir);
    sol
}
