//! Key-rate optimisation: entropy objective on the cutoff space, Frank-Wolfe
//! minimisation and a verified dual lower bound.
//!
//! States live in the basis `|i> (x) D(beta_i)|n>`, `n <= n_c`, so every
//! signal has its own displaced frame on Bob's side.

use crate::conic::{Backend, ConicProblem, ConicSettings, ConicSolution, ConicStatus, ConstraintRow, SparseSym};
use crate::error::{Error, Result};
use crate::fock::{displacement_matrix, hermitian_part, trace_product, CMat, C64};
use crate::linalg::{apply_spectral, eigh, embed, extract, hermitian_basis, min_eigenvalue, psd_sqrt, trace_xlogx};
use crate::protocol::{frame_centers, frame_padding, region_operator, to_displaced_frame, ProtocolParams};

/// Eigenvalue floor inside matrix logarithms.
pub const LOG_FLOOR: f64 = 1e-14;
/// Tolerance for negative eigenvalues of inputs that must be PSD.
pub const PSD_TOL: f64 = 1e-8;

/// Key-map post-processing on the cutoff space.
#[derive(Debug, Clone)]
pub struct KeyMaps {
    /// Number of signals.
    pub d_a: usize,
    /// Levels per displaced frame.
    pub d_b: usize,
    /// Frame centres `beta_i`.
    pub betas: Vec<C64>,
    /// Compressed region operators `1 (x) R^z` in the frame basis.
    pub region: Vec<CMat>,
    /// Square roots of [`Self::region`].
    pub sqrt_region: Vec<CMat>,
    /// Square root of the sum of the region operators.
    pub sqrt_region_total: CMat,
    /// Frame overlaps `S_ab[m,n] = <m| D(beta_a)^dagger D(beta_b) |n>`.
    pub overlaps: Vec<Vec<CMat>>,
}

/// Frame overlap `D(beta_a)^dagger D(beta_b)` on `dim` levels.
pub fn frame_overlap(beta_a: C64, beta_b: C64, dim: usize) -> CMat {
    let phase = ((beta_a.conj() * beta_b - beta_a * beta_b.conj()) * 0.5).exp();
    displacement_matrix(beta_b - beta_a, dim) * phase
}

/// Builds the compressed region operators and frame overlaps for channel transmittance `eta`.
pub fn build_postprocessing_maps(p: &ProtocolParams, eta: f64) -> Result<KeyMaps> {
    p.validate()?;
    let d_a = p.n_states;
    let d_b = p.dim_b();
    let d = d_a * d_b;
    let betas = frame_centers(p, eta);
    let mut region = Vec::with_capacity(p.n_states);
    for z in 0..p.n_states {
        let mut rz = CMat::zeros(d, d);
        for (i, beta) in betas.iter().enumerate() {
            let big = d_b + frame_padding(*beta, d_b);
            let op = region_operator(p, z, big)?;
            let block = to_displaced_frame(op.entries(), *beta, d_b);
            rz.view_mut((i * d_b, i * d_b), (d_b, d_b)).copy_from(&block);
        }
        let lmin = min_eigenvalue(&rz);
        if lmin < -PSD_TOL {
            return Err(Error::InvalidParameter(format!("region operator {z} has eigenvalue {lmin:e}")));
        }
        region.push(rz);
    }
    let sqrt_region: Vec<CMat> = region.iter().map(psd_sqrt).collect();
    let total = region.iter().fold(CMat::zeros(d, d), |acc, r| acc + r);
    let sqrt_region_total = psd_sqrt(&total);
    let overlaps = (0..d_a)
        .map(|a| (0..d_a).map(|b| frame_overlap(betas[a], betas[b], d_b)).collect())
        .collect();
    Ok(KeyMaps { d_a, d_b, betas, region, sqrt_region, sqrt_region_total, overlaps })
}

impl KeyMaps {
    /// Dimension `d_A d_B` of the state space.
    pub fn dim(&self) -> usize {
        self.d_a * self.d_b
    }

    /// Number of key symbols.
    pub fn n_keys(&self) -> usize {
        self.region.len()
    }

    /// Reduced state on `A`: `T(s)_ab = Tr[s_ab S_ba]`.
    pub fn partial_trace(&self, sigma: &CMat) -> CMat {
        let db = self.d_b;
        CMat::from_fn(self.d_a, self.d_a, |a, b| {
            let blk = sigma.view((a * db, b * db), (db, db));
            let s = &self.overlaps[b][a];
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..db {
                for n in 0..db {
                    acc += blk[(m, n)] * s[(n, m)];
                }
            }
            acc
        })
    }

    /// Adjoint of [`Self::partial_trace`]: block `(a, b)` equals `B_ab S_ab`.
    pub fn partial_trace_adjoint(&self, b_op: &CMat) -> CMat {
        let db = self.d_b;
        let mut out = CMat::zeros(self.dim(), self.dim());
        for a in 0..self.d_a {
            for b in 0..self.d_a {
                let v = b_op[(a, b)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                out.view_mut((a * db, b * db), (db, db)).copy_from(&(&self.overlaps[a][b] * v));
            }
        }
        out
    }

    /// Coherent key-register map `G(rho) = K rho K^dagger` with `K = sum_z |z> (x) sqrt(R^z)`.
    pub fn g_map(&self, rho: &CMat) -> CMat {
        let d = self.dim();
        let nz = self.n_keys();
        let mut out = CMat::zeros(nz * d, nz * d);
        for z in 0..nz {
            for zp in 0..nz {
                let blk = &self.sqrt_region[z] * rho * &self.sqrt_region[zp];
                out.view_mut((z * d, zp * d), (d, d)).copy_from(&blk);
            }
        }
        out
    }

    /// Pinching on the key register.
    pub fn pinch(&self, m: &CMat) -> CMat {
        let d = self.dim();
        let nz = m.nrows() / d;
        let mut out = CMat::zeros(m.nrows(), m.ncols());
        for z in 0..nz {
            out.view_mut((z * d, z * d), (d, d)).copy_from(&m.view((z * d, z * d), (d, d)));
        }
        out
    }

    fn check_state(&self, rho: &CMat) -> Result<()> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Dimension(format!("state is {}x{}, expected {d}", rho.nrows(), rho.ncols())));
        }
        let lmin = min_eigenvalue(rho);
        if lmin < -PSD_TOL {
            return Err(Error::Domain(format!("state has eigenvalue {lmin:e}")));
        }
        Ok(())
    }
}

/// `f(rho) = D(G(rho) || Z(G(rho)))` in bits, evaluated through the
/// `d_A d_B`-dimensional operators with the same nonzero spectra.
pub fn objective(rho: &CMat, maps: &KeyMaps) -> Result<f64> {
    maps.check_state(rho)?;
    Ok(objective_unchecked(rho, maps))
}

fn objective_unchecked(rho: &CMat, maps: &KeyMaps) -> f64 {
    let m = &maps.sqrt_region_total * rho * &maps.sqrt_region_total;
    let mut f = trace_xlogx(&m, LOG_FLOOR);
    for s in &maps.sqrt_region {
        f -= trace_xlogx(&(s * rho * s), LOG_FLOOR);
    }
    f
}

fn log2_floored(m: &CMat) -> CMat {
    let (vals, vecs) = eigh(m);
    apply_spectral(&vals, &vecs, |v| v.max(LOG_FLOOR).log2())
}

/// Gradient `G^dagger(log2 G(rho)) - G^dagger(log2 Z(G(rho)))`.
pub fn gradient(rho: &CMat, maps: &KeyMaps) -> Result<CMat> {
    maps.check_state(rho)?;
    let s = &maps.sqrt_region_total;
    let mut g = s * log2_floored(&(s * rho * s)) * s;
    for s in &maps.sqrt_region {
        g -= s * log2_floored(&(s * rho * s)) * s;
    }
    Ok(hermitian_part(&g))
}

/// One constraint row `lo <= Tr[op rho] <= hi` before corrections.
#[derive(Debug, Clone)]
pub struct ObservableRow {
    /// Observable on the cutoff space.
    pub operator: CMat,
    /// Honest expectation `gamma`.
    pub gamma: f64,
    /// Statistical radius `mu`.
    pub mu: f64,
    /// Acceptance widening `t`.
    pub t: f64,
    /// Operator-norm cap entering the weight correction.
    pub cap: f64,
}

/// Feasible set of the cutoff-space problem.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    /// Alice's reduced state.
    pub rho_a: CMat,
    /// Moment observables.
    pub observables: Vec<ObservableRow>,
    /// Weight outside the cutoff space.
    pub w: f64,
    /// `(d_A, d_B)`.
    pub dims: (usize, usize),
    /// Use the literal interval `[gamma + mu + t - w cap, gamma - mu - t]`.
    pub literal: bool,
}

impl ConstraintSet {
    /// Checks dimensions and parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims.0 * self.dims.1;
        if self.rho_a.nrows() != self.dims.0 {
            return Err(Error::Dimension("rho_A has wrong order".into()));
        }
        if !(0.0..1.0).contains(&self.w) {
            return Err(Error::InvalidParameter(format!("weight {} not in [0,1)", self.w)));
        }
        for o in &self.observables {
            if o.operator.nrows() != d {
                return Err(Error::Dimension("observable has wrong order".into()));
            }
            if !(o.mu >= 0.0) || !(o.t >= 0.0) {
                return Err(Error::InvalidParameter("negative acceptance radius".into()));
            }
        }
        Ok(())
    }

    /// Interval `(lo, hi)` for each observable.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.observables
            .iter()
            .map(|o| {
                let r = o.mu + o.t;
                if self.literal {
                    (o.gamma + r - self.w * o.cap, o.gamma - r)
                } else {
                    (o.gamma - r - self.w * o.cap, o.gamma + r)
                }
            })
            .collect()
    }

    /// Largest violation of the constraints by `rho`.
    pub fn violation(&self, rho: &CMat, maps: &KeyMaps) -> f64 {
        let mut v: f64 = 0.0;
        for (o, (lo, hi)) in self.observables.iter().zip(self.bounds()) {
            let x = trace_product(&o.operator, rho);
            v = v.max(lo - x).max(x - hi);
        }
        let tr = rho.trace().re;
        v = v.max(1.0 - self.w - tr).max(tr - 1.0);
        let diff = maps.partial_trace(rho) - &self.rho_a;
        let tn = crate::linalg::trace_norm(&diff);
        v.max(tn - 2.0 * self.w.sqrt()).max(-min_eigenvalue(rho))
    }
}

/// Outcome of the key-rate optimisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Dual point verified; the bound is reliable.
    Certified,
    /// Dual verification failed; the bound is unusable.
    FeasibilityFailed,
    /// Conic solver hit its iteration limit.
    MaxIter,
    /// The constraints admit no state.
    Infeasible,
}

impl SolveStatus {
    /// Lower-case name.
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Certified => "certified",
            SolveStatus::FeasibilityFailed => "feasibility_failed",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Dual point of the linearised problem.
///
/// The bound is `sum_k a_k (lo_k - e) - b_k (hi_k + e) + c (1 - w - e) - d (1 + e)
/// + Tr[rho_A (theta - tau)] - s (2 sqrt(w) + e)` and is valid whenever
/// `grad - sum_k (a_k - b_k) Gamma_k - (c - d) 1 - T^*(theta - tau)` is PSD,
/// all scalars are nonnegative and `0 <= tau, theta <= s`.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// Multipliers of the lower observable bounds.
    pub lower: Vec<f64>,
    /// Multipliers of the upper observable bounds.
    pub upper: Vec<f64>,
    /// Multiplier of `Tr >= 1 - w`.
    pub trace_lower: f64,
    /// Multiplier of `Tr <= 1`, including the verification shift.
    pub trace_upper: f64,
    /// Negative part of the reduced-state multiplier.
    pub tau: CMat,
    /// Positive part of the reduced-state multiplier.
    pub theta: CMat,
    /// Trace-norm multiplier.
    pub s: f64,
    /// Shift added to `trace_upper` during verification.
    pub shift: f64,
    /// Numerical relaxation `e`.
    pub eps_num: f64,
    /// Dual objective value.
    pub value: f64,
}

/// Slack operator of a dual point.
pub fn dual_slack(grad: &CMat, cs: &ConstraintSet, maps: &KeyMaps, cert: &DualCertificate) -> CMat {
    let d = maps.dim();
    let mut s = grad.clone();
    for (k, o) in cs.observables.iter().enumerate() {
        s -= &o.operator * C64::new(cert.lower[k] - cert.upper[k], 0.0);
    }
    s -= CMat::identity(d, d) * C64::new(cert.trace_lower - cert.trace_upper, 0.0);
    s -= maps.partial_trace_adjoint(&(&cert.theta - &cert.tau));
    hermitian_part(&s)
}

/// Dual objective of a certificate.
pub fn dual_value(cs: &ConstraintSet, cert: &DualCertificate) -> f64 {
    let e = cert.eps_num;
    let mut v = 0.0;
    for (k, (lo, hi)) in cs.bounds().into_iter().enumerate() {
        v += cert.lower[k] * (lo - e) - cert.upper[k] * (hi + e);
    }
    v += cert.trace_lower * (1.0 - cs.w - e) - cert.trace_upper * (1.0 + e);
    v += trace_product(&cs.rho_a, &(&cert.theta - &cert.tau));
    v - cert.s * (2.0 * cs.w.sqrt() + e)
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Frank-Wolfe gap tolerance in bits.
    pub tol: f64,
    /// Frank-Wolfe iteration limit.
    pub max_iter: usize,
    /// Numerical relaxation of the dual.
    pub eps_num: f64,
    /// Mixing with the maximally mixed state before taking the gradient.
    pub perturbation: f64,
    /// Golden-section iterations.
    pub line_search_iters: usize,
    /// Largest pre-repair dual residual accepted as verified.
    pub max_dual_residual: f64,
    /// Conic solver settings.
    pub conic: ConicSettings,
    /// Conic backend.
    pub backend: Backend,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 150,
            eps_num: 1e-8,
            perturbation: 1e-10,
            line_search_iters: 40,
            max_dual_residual: 1e-6,
            conic: ConicSettings::default(),
            backend: Backend::Internal,
        }
    }
}

/// Result of [`solve_key_rate`] and [`certified_dual_bound`].
#[derive(Debug, Clone)]
pub struct SolverReport {
    /// Final Frank-Wolfe iterate.
    pub rho_step1: CMat,
    /// `f(rho_step1)`.
    pub primal_value: f64,
    /// Verified dual value of the linearised problem.
    pub dual_value: f64,
    /// `f(rho') - Tr[rho' grad] + dual_value` at the perturbed iterate `rho'`.
    pub certified_lower_bound: f64,
    /// Largest dual constraint violation before repair.
    pub dual_feasibility_residual: f64,
    /// Smallest slack eigenvalue after repair.
    pub verified_min_eigenvalue: f64,
    /// Last Frank-Wolfe gap.
    pub fw_gap: f64,
    /// Frank-Wolfe iterations.
    pub iterations: usize,
    /// Objective after each iteration (starting value first).
    pub history: Vec<f64>,
    /// Status.
    pub status: SolveStatus,
    /// Gradient used for the certificate.
    pub gradient: CMat,
    /// Dual point.
    pub certificate: Option<DualCertificate>,
}

struct Layout {
    lower_slack: Vec<Option<usize>>,
    upper_slack: Vec<Option<usize>>,
    obs_rows: Vec<(usize, Option<usize>)>,
    trace_rows: (usize, Option<usize>),
    tn_rows: Vec<usize>,
    tn_norm_row: Option<usize>,
}

fn half_embed_sparse(h: &CMat) -> SparseSym {
    SparseSym::from_dense(&(embed(h) * 0.5))
}

/// Linear SDP `min Tr[grad sigma]` over the feasible set in standard conic form.
fn build_linear_sdp(grad: &CMat, cs: &ConstraintSet, maps: &KeyMaps) -> (ConicProblem, Layout) {
    let d = maps.dim();
    let da = maps.d_a;
    let with_tn = cs.w > 0.0;
    let mut block_dims = vec![2 * d];
    if with_tn {
        block_dims.push(2 * da);
        block_dims.push(2 * da);
    }
    let mut lp_dim = 0;
    let mut rows = Vec::new();
    let mut lower_slack = Vec::new();
    let mut upper_slack = Vec::new();
    let mut obs_rows = Vec::new();
    for (o, (lo, hi)) in cs.observables.iter().zip(cs.bounds()) {
        let a = half_embed_sparse(&o.operator);
        if lo == hi {
            obs_rows.push((rows.len(), None));
            rows.push(ConstraintRow { blocks: vec![(0, a)], lp: vec![], rhs: lo });
            lower_slack.push(None);
            upper_slack.push(None);
        } else {
            let sl = lp_dim;
            let su = lp_dim + 1;
            lp_dim += 2;
            obs_rows.push((rows.len(), Some(rows.len() + 1)));
            rows.push(ConstraintRow { blocks: vec![(0, a.clone())], lp: vec![(sl, -1.0)], rhs: lo });
            rows.push(ConstraintRow { blocks: vec![(0, a)], lp: vec![(su, 1.0)], rhs: hi });
            lower_slack.push(Some(sl));
            upper_slack.push(Some(su));
        }
    }
    let id = half_embed_sparse(&CMat::identity(d, d));
    let trace_rows = if cs.w > 0.0 {
        let tl = lp_dim;
        let tu = lp_dim + 1;
        lp_dim += 2;
        let r = rows.len();
        rows.push(ConstraintRow { blocks: vec![(0, id.clone())], lp: vec![(tl, -1.0)], rhs: 1.0 - cs.w });
        rows.push(ConstraintRow { blocks: vec![(0, id)], lp: vec![(tu, 1.0)], rhs: 1.0 });
        (r, Some(r + 1))
    } else {
        rows.push(ConstraintRow { blocks: vec![(0, id)], lp: vec![], rhs: 1.0 });
        (rows.len() - 1, None)
    };
    let mut tn_rows = Vec::new();
    for e in hermitian_basis(da) {
        let mut blocks = vec![(0, half_embed_sparse(&maps.partial_trace_adjoint(&e)))];
        if with_tn {
            let he = half_embed_sparse(&e);
            let neg = SparseSym { entries: he.entries.iter().map(|&(i, j, v)| (i, j, -v)).collect() };
            blocks.push((1, neg));
            blocks.push((2, he));
        }
        tn_rows.push(rows.len());
        rows.push(ConstraintRow { blocks, lp: vec![], rhs: trace_product(&e, &cs.rho_a) });
    }
    let tn_norm_row = if with_tn {
        let sl = lp_dim;
        lp_dim += 1;
        let ida = half_embed_sparse(&CMat::identity(da, da));
        rows.push(ConstraintRow {
            blocks: vec![(1, ida.clone()), (2, ida)],
            lp: vec![(sl, 1.0)],
            rhs: 2.0 * cs.w.sqrt(),
        });
        Some(rows.len() - 1)
    } else {
        None
    };
    let mut c_blocks = vec![embed(grad) * 0.5];
    if with_tn {
        c_blocks.push(nalgebra::DMatrix::zeros(2 * da, 2 * da));
        c_blocks.push(nalgebra::DMatrix::zeros(2 * da, 2 * da));
    }
    let problem = ConicProblem { block_dims, lp_dim, c_blocks, c_lp: vec![0.0; lp_dim], rows };
    (problem, Layout { lower_slack, upper_slack, obs_rows, trace_rows, tn_rows, tn_norm_row })
}

/// Dual point read off a conic solution before repair.
fn raw_certificate(sol: &ConicSolution, layout: &Layout, maps: &KeyMaps, eps_num: f64) -> DualCertificate {
    let y = &sol.y;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (k, &(r0, r1)) in layout.obs_rows.iter().enumerate() {
        match r1 {
            Some(r1) => {
                lower.push(y[r0]);
                upper.push(-y[r1]);
            }
            None => {
                lower.push(y[r0].max(0.0));
                upper.push((-y[r0]).max(0.0));
            }
        }
        debug_assert!(layout.lower_slack[k].is_some() == r1.is_some());
        debug_assert!(layout.upper_slack[k].is_some() == r1.is_some());
    }
    let (t0, t1) = layout.trace_rows;
    let (trace_lower, trace_upper) = match t1 {
        Some(t1) => (y[t0], -y[t1]),
        None => (y[t0].max(0.0), (-y[t0]).max(0.0)),
    };
    let basis = hermitian_basis(maps.d_a);
    let mut x = CMat::zeros(maps.d_a, maps.d_a);
    for (e, &r) in basis.iter().zip(&layout.tn_rows) {
        x += e * C64::new(y[r], 0.0);
    }
    let x = hermitian_part(&x);
    let (vals, vecs) = eigh(&x);
    let theta = apply_spectral(&vals, &vecs, |v| v.max(0.0));
    let tau = apply_spectral(&vals, &vecs, |v| (-v).max(0.0));
    let s = match layout.tn_norm_row {
        Some(r) => -y[r],
        None => vals.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    DualCertificate {
        lower,
        upper,
        trace_lower,
        trace_upper,
        tau,
        theta,
        s,
        shift: 0.0,
        eps_num,
        value: f64::NAN,
    }
}

/// Largest constraint violation of a dual point, slack PSD-ness included.
fn certificate_residual(grad: &CMat, cs: &ConstraintSet, maps: &KeyMaps, cert: &DualCertificate) -> f64 {
    let mut r: f64 = (-min_eigenvalue(&dual_slack(grad, cs, maps, cert))).max(0.0);
    for v in cert.lower.iter().chain(&cert.upper).chain([&cert.trace_lower, &cert.trace_upper, &cert.s]) {
        r = r.max(-v);
    }
    let norm = crate::linalg::max_eigenvalue(&cert.tau).max(crate::linalg::max_eigenvalue(&cert.theta));
    r.max(norm - cert.s)
}

/// Makes a dual point feasible: clip signs, raise `s`, then shift the
/// `Tr <= 1` multiplier by the most negative slack eigenvalue.
fn repair_certificate(grad: &CMat, cs: &ConstraintSet, maps: &KeyMaps, mut cert: DualCertificate) -> (DualCertificate, f64) {
    for v in cert.lower.iter_mut().chain(cert.upper.iter_mut()) {
        *v = v.max(0.0);
    }
    cert.trace_lower = cert.trace_lower.max(0.0);
    cert.trace_upper = cert.trace_upper.max(0.0);
    let norm = crate::linalg::max_eigenvalue(&cert.tau).max(crate::linalg::max_eigenvalue(&cert.theta));
    cert.s = cert.s.max(norm).max(0.0);
    let lmin = min_eigenvalue(&dual_slack(grad, cs, maps, &cert));
    let margin = 1e-12;
    let shift = (margin - lmin).max(0.0);
    cert.trace_upper += shift;
    cert.shift = shift;
    let after = min_eigenvalue(&dual_slack(grad, cs, maps, &cert));
    cert.value = dual_value(cs, &cert);
    (cert, after)
}

/// Solves `min Tr[grad sigma]` over the feasible set.
fn linear_step(
    grad: &CMat,
    cs: &ConstraintSet,
    maps: &KeyMaps,
    settings: &SolverSettings,
) -> Result<(ConicSolution, Layout, CMat)> {
    let (problem, layout) = build_linear_sdp(grad, cs, maps);
    let sol = settings.backend.solve(&problem, &settings.conic)?;
    let sigma = hermitian_part(&extract(&sol.x_blocks[0]));
    Ok((sol, layout, sigma))
}

/// `(1 - e) rho_+ + e 1/d` with `rho_+` the PSD part of `rho`.
pub fn perturbed_state(rho: &CMat, e: f64) -> CMat {
    let d = rho.nrows();
    let plus = crate::linalg::psd_part(rho);
    hermitian_part(&(plus * C64::new(1.0 - e, 0.0) + CMat::identity(d, d) * C64::new(e / d as f64, 0.0)))
}

/// Verified lower bound from the iterate `rho_step1`.
pub fn certified_dual_bound(
    rho_step1: &CMat,
    cs: &ConstraintSet,
    maps: &KeyMaps,
    settings: &SolverSettings,
) -> Result<SolverReport> {
    cs.validate()?;
    let rho_p = perturbed_state(rho_step1, settings.perturbation);
    let grad = gradient(&rho_p, maps)?;
    let (sol, layout, _) = linear_step(&grad, cs, maps, settings)?;
    let mut report = certify_from_solution(rho_step1, &rho_p, grad, &sol, &layout, cs, maps, settings)?;
    report.primal_value = objective(rho_step1, maps)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn certify_from_solution(
    rho: &CMat,
    rho_p: &CMat,
    grad: CMat,
    sol: &ConicSolution,
    layout: &Layout,
    cs: &ConstraintSet,
    maps: &KeyMaps,
    settings: &SolverSettings,
) -> Result<SolverReport> {
    let primal_value = objective_unchecked(rho, maps);
    let mut report = SolverReport {
        rho_step1: rho.clone(),
        primal_value,
        dual_value: f64::NEG_INFINITY,
        certified_lower_bound: f64::NEG_INFINITY,
        dual_feasibility_residual: f64::INFINITY,
        verified_min_eigenvalue: f64::NEG_INFINITY,
        fw_gap: f64::NAN,
        iterations: 0,
        history: Vec::new(),
        status: SolveStatus::FeasibilityFailed,
        gradient: grad.clone(),
        certificate: None,
    };
    match sol.status {
        ConicStatus::PrimalInfeasible => {
            report.status = SolveStatus::Infeasible;
            return Ok(report);
        }
        ConicStatus::NumericalFailure | ConicStatus::DualInfeasible => return Ok(report),
        ConicStatus::MaxIter | ConicStatus::Optimal | ConicStatus::NearOptimal => {}
    }
    let raw = raw_certificate(sol, layout, maps, settings.eps_num);
    let residual = certificate_residual(&grad, cs, maps, &raw);
    let (cert, after) = repair_certificate(&grad, cs, maps, raw);
    let offset = objective_unchecked(rho_p, maps) - trace_product(rho_p, &grad);
    report.dual_feasibility_residual = residual;
    report.verified_min_eigenvalue = after;
    report.dual_value = cert.value;
    let finite = cert.value.is_finite() && offset.is_finite() && after.is_finite();
    report.certified_lower_bound = offset + cert.value;
    report.status = if !finite || after < 0.0 || residual > settings.max_dual_residual {
        if sol.status == ConicStatus::MaxIter {
            SolveStatus::MaxIter
        } else {
            SolveStatus::FeasibilityFailed
        }
    } else {
        SolveStatus::Certified
    };
    report.certificate = Some(cert);
    Ok(report)
}

/// Golden-section minimiser of `g` on `[0, 1]`, returning `(t, g(t))`
/// and never worse than `t = 0`.
fn golden_section(g: impl Fn(f64) -> f64, iters: usize) -> (f64, f64) {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    for _ in 0..iters {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    let mut best = if gc < gd { (c, gc) } else { (d, gd) };
    for t in [0.0, 1.0] {
        let v = g(t);
        if v < best.1 || (t == 0.0 && v <= best.1) {
            best = (t, v);
        }
    }
    best
}

/// Frank-Wolfe minimisation from `rho0`; returns the last iterate, its
/// objective history, the gap and the iteration count.
pub fn frank_wolfe(
    rho0: &CMat,
    cs: &ConstraintSet,
    maps: &KeyMaps,
    settings: &SolverSettings,
) -> Result<SolverReport> {
    cs.validate()?;
    maps.check_state(rho0)?;
    let mut rho = hermitian_part(rho0);
    let mut f = objective_unchecked(&rho, maps);
    let mut history = vec![f];
    let mut last: Option<(CMat, CMat, ConicSolution, Layout)> = None;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..settings.max_iter {
        let rho_p = perturbed_state(&rho, settings.perturbation);
        let grad = gradient(&rho_p, maps)?;
        let (sol, layout, sigma) = linear_step(&grad, cs, maps, settings)?;
        if sol.status == ConicStatus::PrimalInfeasible {
            let mut rep = certify_from_solution(&rho, &rho_p, grad, &sol, &layout, cs, maps, settings)?;
            rep.history = history;
            return Ok(rep);
        }
        gap = trace_product(&grad, &(&rho - &sigma));
        iterations = k;
        if gap <= settings.tol || !matches!(sol.status, ConicStatus::Optimal | ConicStatus::NearOptimal | ConicStatus::MaxIter) {
            last = Some((rho_p, grad, sol, layout));
            break;
        }
        let dir = &sigma - &rho;
        let (t, ft) = golden_section(
            |t| objective_unchecked(&(&rho + &dir * C64::new(t, 0.0)), maps),
            settings.line_search_iters,
        );
        iterations = k + 1;
        if t == 0.0 || ft >= f {
            last = Some((rho_p, grad, sol, layout));
            break;
        }
        rho = hermitian_part(&(&rho + &dir * C64::new(t, 0.0)));
        f = ft;
        history.push(f);
    }
    let (rho_p, grad, sol, layout) = match last {
        Some(v) => v,
        None => {
            let rho_p = perturbed_state(&rho, settings.perturbation);
            let grad = gradient(&rho_p, maps)?;
            let (sol, layout, sigma) = linear_step(&grad, cs, maps, settings)?;
            gap = trace_product(&grad, &(&rho - &sigma));
            (rho_p, grad, sol, layout)
        }
    };
    let mut rep = certify_from_solution(&rho, &rho_p, grad, &sol, &layout, cs, maps, settings)?;
    rep.fw_gap = gap;
    rep.iterations = iterations;
    rep.history = history;
    Ok(rep)
}

/// Feasible interior point for `cs`, used when the starting state violates it.
pub fn feasible_point(cs: &ConstraintSet, maps: &KeyMaps, settings: &SolverSettings) -> Result<Option<CMat>> {
    let d = maps.dim();
    let (sol, _, sigma) = linear_step(&CMat::zeros(d, d), cs, maps, settings)?;
    Ok(match sol.status {
        ConicStatus::Optimal | ConicStatus::NearOptimal | ConicStatus::MaxIter => Some(crate::linalg::psd_part(&sigma)),
        _ => None,
    })
}

/// Frank-Wolfe from `rho0` (replaced by a feasible point when it violates the
/// constraints by more than `1e-9`) followed by the certified dual bound.
pub fn solve_key_rate(
    rho0: &CMat,
    cs: &ConstraintSet,
    maps: &KeyMaps,
    settings: &SolverSettings,
) -> Result<SolverReport> {
    cs.validate()?;
    let start = if cs.violation(rho0, maps) > 1e-9 {
        match feasible_point(cs, maps, settings)? {
            Some(s) => s,
            None => {
                let d = maps.dim();
                return Ok(SolverReport {
                    rho_step1: rho0.clone(),
                    primal_value: f64::NAN,
                    dual_value: f64::NEG_INFINITY,
                    certified_lower_bound: f64::NEG_INFINITY,
                    dual_feasibility_residual: f64::INFINITY,
                    verified_min_eigenvalue: f64::NEG_INFINITY,
                    fw_gap: f64::NAN,
                    iterations: 0,
                    history: Vec::new(),
                    status: SolveStatus::Infeasible,
                    gradient: CMat::zeros(d, d),
                    certificate: None,
                });
            }
        }
    } else {
        crate::linalg::psd_part(rho0)
    };
    frank_wolfe(&start, cs, maps, settings)
}
