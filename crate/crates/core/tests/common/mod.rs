//! Test-side oracles written independently of the library's numerics.
#![allow(dead_code)]

use cvqkd_keyrate::fock::{CMat, C64};
use cvqkd_keyrate::solver::{ConstraintSet, DualCertificate, KeyMaps, ObservableRow, SolverReport};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `ln P[Bin(k, q) <= l]` by log-sum-exp over exact log binomial terms.
pub fn ln_binomial_cdf(k: u64, l: u64, q: f64) -> f64 {
    let mut terms = Vec::with_capacity(l as usize + 1);
    let mut ln_choose = 0.0;
    for j in 0..=l.min(k) {
        if j > 0 {
            ln_choose += ((k - j + 1) as f64).ln() - (j as f64).ln();
        }
        terms.push(ln_choose + j as f64 * q.ln() + (k - j) as f64 * (-q).ln_1p());
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]`.
pub fn real_embedding(m: &CMat) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let v = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Cyclic Jacobi eigen-decomposition of a real symmetric matrix: eigenvalues
/// and eigenvectors (columns), unsorted.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-32 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Eigenvalues of a Hermitian matrix through its real embedding (each appears twice).
pub fn eigenvalues_via_embedding(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = real_embedding(&h);
    let sym = (&e + e.transpose()) * 0.5;
    let mut v = jacobi_eigen(&sym).0;
    v.sort_by(f64::total_cmp);
    v
}

/// True when `m + delta 1` admits a Cholesky factorisation (so `lambda_min(m) > -delta`).
pub fn cholesky_accepts(m: &CMat, delta: f64) -> bool {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = real_embedding(&h);
    let n = e.nrows();
    let shifted = (&e + e.transpose()) * 0.5 + DMatrix::identity(n, n) * delta;
    nalgebra::Cholesky::new(shifted).is_some()
}

/// `V f(Lambda) V^dagger` through the real embedding.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let n = m.nrows();
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = real_embedding(&h);
    let (vals, vecs) = jacobi_eigen(&e);
    let mut out = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (k, &lam) in vals.iter().enumerate() {
        let v = vecs.column(k);
        out += v * v.transpose() * f(lam);
    }
    // `out` is the embedding of f(m); average the duplicated blocks.
    CMat::from_fn(n, n, |i, j| C64::new(0.5 * (out[(i, j)] + out[(i + n, j + n)]), 0.5 * (out[(i + n, j)] - out[(i, j + n)])))
}

/// `Tr[M ln M]` from `ln x = int_0^inf (1/(1+t) - 1/(x+t)) dt`, using matrix
/// inverses only (no eigen-decomposition).
pub fn trace_xlnx_integral(m: &CMat) -> f64 {
    let n = m.nrows();
    let id = CMat::identity(n, n);
    let (lo, hi, h) = (-42.0, 42.0, 0.02);
    let steps = ((hi - lo) / h) as usize;
    let mut acc = 0.0;
    for s in 0..=steps {
        let u: f64 = lo + s as f64 * h;
        let t = u.exp();
        let inv = (m + &id * C64::new(t, 0.0)).try_inverse().expect("M + t is invertible");
        let g = (m * (&inv - &id * C64::new(1.0 / (1.0 + t), 0.0))).trace().re;
        let wgt = if s == 0 || s == steps { 0.5 } else { 1.0 };
        acc += wgt * t * g;
    }
    -acc * h
}

/// Objective `Tr[M log2 M] - sum_z Tr[M_z log2 M_z]` via [`trace_xlnx_integral`].
pub fn objective_oracle(rho: &CMat, maps: &KeyMaps) -> f64 {
    let m = &maps.sqrt_region_total * rho * &maps.sqrt_region_total;
    let mut v = trace_xlnx_integral(&m);
    for s in &maps.sqrt_region {
        v -= trace_xlnx_integral(&(s * rho * s));
    }
    v / std::f64::consts::LN_2
}

/// Gradient `sqrt(R) log2(M) sqrt(R) - sum_z sqrt(R_z) log2(M_z) sqrt(R_z)` with
/// eigenvalues floored at `floor`, via the real embedding.
pub fn gradient_oracle(rho: &CMat, maps: &KeyMaps, floor: f64) -> CMat {
    let lg = |x: f64| x.max(floor).log2();
    let sr = &maps.sqrt_region_total;
    let mut g = sr * hermitian_function(&(sr * rho * sr), lg) * sr;
    for s in &maps.sqrt_region {
        g -= s * hermitian_function(&(s * rho * s), lg) * s;
    }
    g
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &CMat) -> CMat {
    let norm = a.iter().map(|v| v.norm()).sum::<f64>();
    let mut k = 0;
    while norm / 2f64.powi(k) > 0.25 {
        k += 1;
    }
    let scaled = a * C64::new(0.5f64.powi(k), 0.0);
    let n = a.nrows();
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for j in 1..30 {
        term = &term * &scaled * C64::new(1.0 / j as f64, 0.0);
        sum += &term;
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    sum
}

/// `D(beta) = exp(beta a^dagger - beta^* a)` on `dim` levels.
pub fn displacement_expm(beta: C64, dim: usize) -> CMat {
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let gen = a.adjoint() * beta - &a * beta.conj();
    expm(&gen)
}

/// `<m| D(beta_a)^dagger D(beta_b) |n>` for `m, n < dim` via a padded product.
pub fn overlap_oracle(beta_a: C64, beta_b: C64, dim: usize) -> CMat {
    let big = dim + 60 + (8.0 * (beta_a.norm() + beta_b.norm())).ceil() as usize;
    let prod = displacement_expm(beta_a, big).adjoint() * displacement_expm(beta_b, big);
    prod.view((0, 0), (dim, dim)).into_owned()
}

/// Independent recomputation of a certificate.
pub struct CertificateCheck {
    /// Least eigenvalue of the recomputed slack.
    pub slack_min_eig: f64,
    /// Whether Cholesky accepts the slack shifted by `1e-9`.
    pub cholesky_ok: bool,
    /// Recomputed dual objective.
    pub dual_value: f64,
    /// Recomputed `f(rho') - Tr[rho' grad]`.
    pub offset: f64,
    /// Largest violation among sign and box conditions of the multipliers.
    pub multiplier_violation: f64,
}

/// Rebuilds the dual slack and value of `report` from scratch.
pub fn check_certificate(
    report: &SolverReport,
    cs: &ConstraintSet,
    maps: &KeyMaps,
    perturbation: f64,
) -> CertificateCheck {
    let cert: &DualCertificate = report.certificate.as_ref().expect("certificate present");
    let d = maps.dim();
    let db = maps.d_b;
    // rho' = (1 - e) psd(rho) + e 1/d.
    let plus = hermitian_function(&report.rho_step1, |x| x.max(0.0));
    let rho_p = plus * C64::new(1.0 - perturbation, 0.0) + CMat::identity(d, d) * C64::new(perturbation / d as f64, 0.0);
    let grad = gradient_oracle(&rho_p, maps, 1e-14);
    let offset = objective_oracle(&rho_p, maps) - (&rho_p * &grad).trace().re;

    let mut slack = grad.clone();
    for (k, o) in cs.observables.iter().enumerate() {
        slack -= &o.operator * C64::new(cert.lower[k] - cert.upper[k], 0.0);
    }
    slack -= CMat::identity(d, d) * C64::new(cert.trace_lower - cert.trace_upper, 0.0);
    let ad = &cert.theta - &cert.tau;
    for a in 0..maps.d_a {
        for b in 0..maps.d_a {
            let s_ab = overlap_oracle(maps.betas[a], maps.betas[b], db);
            let blk = s_ab * ad[(a, b)];
            let mut view = slack.view_mut((a * db, b * db), (db, db));
            view -= blk;
        }
    }
    let slack_min_eig = eigenvalues_via_embedding(&slack)[0];
    let cholesky_ok = cholesky_accepts(&slack, 1e-9);

    let e = cert.eps_num;
    let mut dual = 0.0;
    for (k, o) in cs.observables.iter().enumerate() {
        let r = o.mu + o.t;
        let (lo, hi) = if cs.literal { (o.gamma + r - cs.w * o.cap, o.gamma - r) } else { (o.gamma - r - cs.w * o.cap, o.gamma + r) };
        dual += cert.lower[k] * (lo - e) - cert.upper[k] * (hi + e);
    }
    dual += cert.trace_lower * (1.0 - cs.w - e) - cert.trace_upper * (1.0 + e);
    dual += (&cs.rho_a * &ad).trace().re;
    dual -= cert.s * (2.0 * cs.w.sqrt() + e);

    let mut viol: f64 = 0.0;
    for v in cert.lower.iter().chain(&cert.upper).chain([&cert.trace_lower, &cert.trace_upper, &cert.s]) {
        viol = viol.max(-v);
    }
    for m in [&cert.tau, &cert.theta] {
        let ev = eigenvalues_via_embedding(m);
        viol = viol.max(-ev[0]).max(ev[ev.len() - 1] - cert.s);
    }
    CertificateCheck { slack_min_eig, cholesky_ok, dual_value: dual, offset, multiplier_violation: viol }
}

/// Random full-rank density matrix `G G^dagger / Tr`.
pub fn random_density(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    m / C64::new(tr, 0.0)
}

/// Random traceless Hermitian direction with unit Frobenius norm.
pub fn random_direction(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let mut h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let tr = h.trace() / C64::new(d as f64, 0.0);
    for i in 0..d {
        h[(i, i)] -= tr;
    }
    let n = h.norm();
    h / C64::new(n, 0.0)
}

/// One-signal qubit toy: key symbols are the computational basis, so
/// `f(rho) = h((1+z)/2) - h((1+r)/2)` on the Bloch ball.
pub fn qubit_toy_maps() -> KeyMaps {
    let p0 = CMat::from_fn(2, 2, |i, j| C64::new(if i == 0 && j == 0 { 1.0 } else { 0.0 }, 0.0));
    let p1 = CMat::from_fn(2, 2, |i, j| C64::new(if i == 1 && j == 1 { 1.0 } else { 0.0 }, 0.0));
    KeyMaps {
        d_a: 1,
        d_b: 2,
        betas: vec![C64::new(0.0, 0.0)],
        region: vec![p0.clone(), p1.clone()],
        sqrt_region: vec![p0, p1],
        sqrt_region_total: CMat::identity(2, 2),
        overlaps: vec![vec![CMat::identity(2, 2)]],
    }
}

/// Constraint `c - delta <= Tr[sigma_x rho] <= c + delta` on the qubit toy.
pub fn qubit_toy_constraints(c: f64, delta: f64) -> ConstraintSet {
    let sx = CMat::from_fn(2, 2, |i, j| C64::new(if i != j { 1.0 } else { 0.0 }, 0.0));
    ConstraintSet {
        rho_a: CMat::identity(1, 1),
        observables: vec![ObservableRow { operator: sx, gamma: c, mu: delta, t: 0.0, cap: 1.0 }],
        w: 0.0,
        dims: (1, 2),
        literal: false,
    }
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    let f = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    f(p) + f(1.0 - p)
}

/// Brute-force minimum of the qubit toy over a Bloch-ball grid with `x` in `[c-delta, c+delta]`.
pub fn qubit_toy_brute_force(c: f64, delta: f64, steps: usize) -> f64 {
    let mut best = f64::INFINITY;
    for ix in 0..=steps {
        let x = (c - delta) + 2.0 * delta * ix as f64 / steps as f64;
        let rmax = (1.0 - x * x).max(0.0).sqrt();
        for iz in 0..=steps {
            let z = -rmax + 2.0 * rmax * iz as f64 / steps as f64;
            // f grows with |y|, so y = 0 suffices.
            let r = (x * x + z * z).sqrt().min(1.0);
            best = best.min(h2(0.5 * (1.0 + z)) - h2(0.5 * (1.0 + r)));
        }
    }
    best
}

/// Small QPSK instances covering the ideal and trusted models, nonunique
/// acceptance, a weight floor and the literal interval form at zero radius.
pub fn small_instances() -> Vec<(String, cvqkd_keyrate::scenario::ScenarioConfig)> {
    use cvqkd_keyrate::scenario::ScenarioConfig;
    let base = |n_c: usize, n_total: f64| {
        let mut c = ScenarioConfig::default();
        c.protocol.n_c = n_c;
        c.plan.n_total = n_total;
        c
    };
    let mut out = Vec::new();
    out.push(("ideal_nc3".to_string(), base(3, 1e10)));
    let mut c = base(3, 1e10);
    c.channel.distance_km = 30.0;
    out.push(("ideal_nc3_30km".into(), c));
    let mut c = base(3, 1e9);
    c.plan.t_factor = 0.9;
    out.push(("ideal_nc3_nonunique".into(), c));
    let mut c = base(3, 1e10);
    c.detector.trusted = true;
    out.push(("trusted_nc3".into(), c));
    let mut c = base(4, 1e10);
    c.plan.w_min = 1e-4;
    out.push(("ideal_nc4_wfloor".into(), c));
    let mut c = base(3, 1e10);
    c.plan.asymptotic = true;
    c.plan.literal_primal = true;
    out.push(("literal_asymptotic_nc3".into(), c));
    out
}

/// Outcome of one solved instance of the property suite.
pub struct SuiteEntry {
    /// Instance label.
    pub name: String,
    /// Library status.
    pub status: cvqkd_keyrate::solver::SolveStatus,
    /// Certified lower bound.
    pub bound: f64,
    /// Objective at the final iterate.
    pub primal: f64,
    /// Objective at the honest state (feasible by construction).
    pub honest: f64,
    /// Independent recomputation.
    pub check: CertificateCheck,
    /// Dual value reported by the library.
    pub reported_dual: f64,
}

/// Solves every instance of [`small_instances`] and re-verifies each certificate.
pub fn certificate_suite() -> Vec<SuiteEntry> {
    use cvqkd_keyrate::scenario::prepare_point;
    use cvqkd_keyrate::solver::solve_key_rate;
    let mut out = Vec::new();
    for (name, cfg) in small_instances() {
        let prep = prepare_point(&cfg).expect("instance prepares");
        let pp = prep.problem.expect("instance reaches the solver");
        let rep = solve_key_rate(&pp.start, &pp.constraints, &pp.maps, &pp.settings).expect("solver runs");
        let check = check_certificate(&rep, &pp.constraints, &pp.maps, pp.settings.perturbation);
        out.push(SuiteEntry {
            name,
            status: rep.status,
            bound: rep.certified_lower_bound,
            primal: rep.primal_value,
            honest: objective_oracle(&pp.start, &pp.maps),
            reported_dual: rep.dual_value,
            check,
        });
    }
    out
}

/// Conditions every certified entry must meet; returns the failures.
pub fn suite_failures(entries: &[SuiteEntry]) -> Vec<String> {
    let mut bad = Vec::new();
    for e in entries {
        let c = &e.check;
        if e.status != cvqkd_keyrate::solver::SolveStatus::Certified {
            bad.push(format!("{}: status {:?}", e.name, e.status));
            continue;
        }
        if !(e.bound <= e.primal + 1e-12) {
            bad.push(format!("{}: bound {} above primal {}", e.name, e.bound, e.primal));
        }
        if !(e.bound <= e.honest + 1e-12) {
            bad.push(format!("{}: bound {} above honest value {}", e.name, e.bound, e.honest));
        }
        if !(c.slack_min_eig >= -1e-9) || !c.cholesky_ok {
            bad.push(format!("{}: slack min eigenvalue {:e}, cholesky {}", e.name, c.slack_min_eig, c.cholesky_ok));
        }
        if !(c.multiplier_violation <= 1e-9) {
            bad.push(format!("{}: multiplier violation {:e}", e.name, c.multiplier_violation));
        }
        if !((c.dual_value - e.reported_dual).abs() <= 1e-9 * e.reported_dual.abs().max(1.0)) {
            bad.push(format!("{}: dual value {} vs recomputed {}", e.name, e.reported_dual, c.dual_value));
        }
        let recomputed = c.offset + c.dual_value;
        if !((recomputed - e.bound).abs() <= 1e-7) {
            bad.push(format!("{}: bound {} vs recomputed {}", e.name, e.bound, recomputed));
        }
    }
    bad
}

/// Directional derivative of `f` at `rho` along `dir` by Richardson-extrapolated
/// central differences with steps `h` and `h/2`.
pub fn directional_fd(f: impl Fn(&CMat) -> f64, rho: &CMat, dir: &CMat, h: f64) -> f64 {
    let central = |s: f64| {
        let step = dir * C64::new(s, 0.0);
        (f(&(rho + &step)) - f(&(rho - &step))) / (2.0 * s)
    };
    (4.0 * central(0.5 * h) - central(h)) / 3.0
}
