//! Protocol operators: Alice's reduced state, key-map regions, trusted-detector
//! POVM, bounded observables and the key map.
//!
//! Bob's truncated space for signal `i` is spanned by displaced number states
//! `D(beta_i)|n>`, `n <= n_c`, with `beta_i = sqrt(eta) alpha_i`. Operators on
//! `A (x) B` are written in the basis `|i> (x) D(beta_i)|n>`, in which the
//! first and second moment observables are diagonal.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{displacement_matrix, hermitian_part, CMat, HermitianOp, C64};
use crate::special::{ln_factorial, ln_gamma, regularized_gamma_interval};

/// Signal constellation, key map geometry and detector model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// Number of coherent states in the constellation.
    pub n_states: usize,
    /// Coherent-state amplitude `|alpha|` in shot-noise units.
    pub amplitude: f64,
    /// Preparation probabilities.
    pub probs: Vec<f64>,
    /// Radial postselection parameter.
    pub delta_r: f64,
    /// Detection bound.
    pub m_cut: f64,
    /// Photon-number cutoff.
    pub n_c: usize,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Electronic noise in shot-noise units.
    pub nu_el: f64,
    /// Trusted-detector model flag.
    pub trusted: bool,
}

impl ProtocolParams {
    /// QPSK with uniform probabilities and an ideal detector.
    pub fn qpsk(amplitude: f64, delta_r: f64, m_cut: f64, n_c: usize) -> Self {
        Self {
            n_states: 4,
            amplitude,
            probs: vec![0.25; 4],
            delta_r,
            m_cut,
            n_c,
            eta_d: 1.0,
            nu_el: 0.0,
            trusted: false,
        }
    }

    /// Same parameters with a trusted detector `(eta_d, nu_el)`.
    pub fn with_trusted_detector(mut self, eta_d: f64, nu_el: f64) -> Self {
        self.eta_d = eta_d;
        self.nu_el = nu_el;
        self.trusted = true;
        self
    }

    /// Checks the invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_states < 2 {
            return bad(format!("n_states = {} < 2", self.n_states));
        }
        if self.probs.len() != self.n_states {
            return bad(format!("{} probabilities for {} states", self.probs.len(), self.n_states));
        }
        if self.probs.iter().any(|&p| !(p > 0.0)) {
            return bad("probabilities must be positive".into());
        }
        if (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("probabilities must sum to 1".into());
        }
        if !(self.amplitude >= 0.0) {
            return bad(format!("amplitude {} < 0", self.amplitude));
        }
        if !(self.delta_r >= 0.0) || !(self.m_cut > 0.0) || self.delta_r > self.m_cut {
            return bad(format!("need 0 <= delta_r <= M, got {} and {}", self.delta_r, self.m_cut));
        }
        if self.n_c < 1 {
            return bad("n_c must be at least 1".into());
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) || !(self.nu_el >= 0.0) {
            return bad(format!("detector (eta_d={}, nu_el={}) out of range", self.eta_d, self.nu_el));
        }
        if !self.trusted && (self.eta_d != 1.0 || self.nu_el != 0.0) {
            return bad("an untrusted detector model requires eta_d = 1 and nu_el = 0".into());
        }
        Ok(())
    }

    /// Dimension of Bob's truncated space.
    pub fn dim_b(&self) -> usize {
        self.n_c + 1
    }

    /// Constellation points `|alpha| e^{2 pi i k / N}`, exact for QPSK.
    pub fn constellation(&self) -> Vec<C64> {
        (0..self.n_states)
            .map(|k| {
                if self.n_states == 4 {
                    let unit = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
                    unit[k] * self.amplitude
                } else {
                    C64::from_polar(self.amplitude, 2.0 * PI * k as f64 / self.n_states as f64)
                }
            })
            .collect()
    }

    /// Detector thermal occupation `(1 - eta_d + nu_el) / eta_d`.
    pub fn detector_nbar(&self) -> f64 {
        (1.0 - self.eta_d + self.nu_el) / self.eta_d
    }

    /// Angular sector `[lo, hi)` of key symbol `z`.
    pub fn sector(&self, z: usize) -> (f64, f64) {
        let n = self.n_states as f64;
        ((2.0 * z as f64 - 1.0) * PI / n, (2.0 * z as f64 + 1.0) * PI / n)
    }
}

/// Coherent overlap `<a|b> = exp(-|a|^2/2 - |b|^2/2 + conj(a) b)`.
pub fn coherent_overlap(a: C64, b: C64) -> C64 {
    (-0.5 * a.norm_sqr() - 0.5 * b.norm_sqr() + a.conj() * b).exp()
}

/// Alice's reduced state `(rho_A)_ij = sqrt(p_i p_j) <alpha_j|alpha_i>`.
pub fn rho_alice(p: &ProtocolParams) -> Result<HermitianOp> {
    p.validate()?;
    let pts = p.constellation();
    let n = p.n_states;
    let m = CMat::from_fn(n, n, |i, j| coherent_overlap(pts[j], pts[i]) * (p.probs[i] * p.probs[j]).sqrt());
    HermitianOp::new(m, "rho_A")
}

/// `int_{phi1}^{phi2} e^{-i d phi} dphi`.
fn angular_factor(d: i64, phi1: f64, phi2: f64) -> C64 {
    if d == 0 {
        return C64::new(phi2 - phi1, 0.0);
    }
    let df = d as f64;
    let i = C64::new(0.0, 1.0);
    ((-i * df * phi2).exp() - (-i * df * phi1).exp()) / (-i * df)
}

/// Ideal-heterodyne region `(1/pi) int |y><y| d^2y` over the annular sector
/// `r_in <= |y| <= r_out`, `phi1 <= arg y < phi2`, on `dim` Fock levels.
pub fn ideal_sector_operator(r_in: f64, r_out: f64, phi1: f64, phi2: f64, dim: usize) -> Result<CMat> {
    let mut out = CMat::zeros(dim, dim);
    if r_in >= r_out {
        return Ok(out);
    }
    for n in 0..dim {
        for m in n..dim {
            let s = 0.5 * (n + m) as f64 + 1.0;
            let frac = regularized_gamma_interval(s, r_in * r_in, r_out * r_out)?;
            if frac == 0.0 {
                continue;
            }
            let log_mag = ln_gamma(s) - 0.5 * (ln_factorial(n) + ln_factorial(m));
            let radial = 0.5 * frac * log_mag.exp();
            // <n|y><y|m> carries e^{i(n-m)phi}.
            let v = angular_factor(m as i64 - n as i64, phi1, phi2) * (radial / PI);
            out[(n, m)] = v;
            out[(m, n)] = v.conj();
        }
    }
    Ok(out)
}

/// Region operator `R^z` of the ideal heterodyne key map in the Fock basis.
pub fn region_operator_ideal(p: &ProtocolParams, z: usize, dim: usize) -> Result<HermitianOp> {
    check_symbol(p, z)?;
    let (lo, hi) = p.sector(z);
    let m = ideal_sector_operator(p.delta_r, p.m_cut, lo, hi, dim)?;
    Ok(HermitianOp::symmetrized(m, format!("R^{z} ideal")))
}

fn check_symbol(p: &ProtocolParams, z: usize) -> Result<()> {
    if z >= p.n_states {
        return Err(Error::Domain(format!("key symbol {z} >= {}", p.n_states)));
    }
    Ok(())
}

/// Trusted-detector constants `(nbar_d, a, b)`.
fn trusted_constants(p: &ProtocolParams) -> Result<(f64, f64, f64)> {
    let nbar = p.detector_nbar();
    let b = p.eta_d * nbar * (1.0 + nbar);
    if !(b > 0.0) {
        return Err(Error::Domain(
            "detector noise is zero; use the ideal heterodyne POVM instead".into(),
        ));
    }
    Ok((nbar, 1.0 / (p.eta_d * (1.0 + nbar)), b))
}

/// `ln C_{n,m}` without the `nbar_d^n` factor, which is merged with the Laguerre sum.
fn ln_c_nm_reduced(p: &ProtocolParams, nbar: f64, n: usize, m: usize) -> f64 {
    let d = (m - n) as f64;
    -PI.ln() - (0.5 * d + 1.0) * p.eta_d.ln() + 0.5 * (ln_factorial(n) - ln_factorial(m))
        - (m as f64 + 1.0) * (1.0 + nbar).ln()
}

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Trusted-detector POVM element `G_y` on `dim` Fock levels.
pub fn trusted_povm_element(p: &ProtocolParams, y: C64, dim: usize) -> Result<HermitianOp> {
    let (nbar, a, _) = trusted_constants(p)?;
    let r2 = y.norm_sqr();
    let mut out = CMat::zeros(dim, dim);
    for n in 0..dim {
        for m in n..dim {
            let base = ln_c_nm_reduced(p, nbar, n, m) - a * r2;
            // nbar^n L_n^(m-n)(-r2/b) = sum_j C(m, n-j) nbar^(n-j) (r2 a)^j / j!
            let mut sum = 0.0;
            for j in 0..=n {
                let mut lt = ln_binom(m, n - j) - ln_factorial(j);
                if n > j {
                    lt += (n - j) as f64 * nbar.ln();
                }
                if j > 0 {
                    lt += j as f64 * (r2 * a).ln();
                }
                sum += (lt + base).exp();
            }
            let v = y.conj().powu((m - n) as u32) * sum;
            out[(n, m)] = v;
            out[(m, n)] = v.conj();
        }
    }
    Ok(HermitianOp::symmetrized(out, format!("G_y(y={y})")))
}

/// Trusted-detector region `int G_y d^2y` over an annular sector, on `dim` levels.
pub fn trusted_sector_operator(
    p: &ProtocolParams,
    r_in: f64,
    r_out: f64,
    phi1: f64,
    phi2: f64,
    dim: usize,
) -> Result<CMat> {
    let (nbar, a, _) = trusted_constants(p)?;
    let mut out = CMat::zeros(dim, dim);
    if r_in >= r_out {
        return Ok(out);
    }
    for n in 0..dim {
        for m in n..dim {
            let d = m - n;
            let base = ln_c_nm_reduced(p, nbar, n, m);
            let mut sum = 0.0;
            for j in 0..=n {
                // radial: int r^{2q+1} e^{-a r^2} dr = Gamma(q+1)/(2 a^{q+1}) * interval
                let q = 0.5 * d as f64 + j as f64;
                let frac = regularized_gamma_interval(q + 1.0, a * r_in * r_in, a * r_out * r_out)?;
                if frac == 0.0 {
                    continue;
                }
                let mut lt = ln_binom(m, n - j) - ln_factorial(j) + ln_gamma(q + 1.0)
                    - 2f64.ln()
                    - (q + 1.0) * a.ln()
                    + j as f64 * a.ln();
                if n > j {
                    lt += (n - j) as f64 * nbar.ln();
                }
                sum += (lt + base).exp() * frac;
            }
            let v = angular_factor(d as i64, phi1, phi2) * sum;
            out[(n, m)] = v;
            out[(m, n)] = v.conj();
        }
    }
    Ok(out)
}

/// Region operator `R^z` for the trusted detector in the Fock basis.
pub fn region_operator_trusted(p: &ProtocolParams, z: usize, dim: usize) -> Result<HermitianOp> {
    check_symbol(p, z)?;
    let (lo, hi) = p.sector(z);
    let m = trusted_sector_operator(p, p.delta_r, p.m_cut, lo, hi, dim)?;
    Ok(HermitianOp::symmetrized(m, format!("R^{z} trusted")))
}

/// Region operator for the configured detector model.
pub fn region_operator(p: &ProtocolParams, z: usize, dim: usize) -> Result<HermitianOp> {
    if p.trusted {
        region_operator_trusted(p, z, dim)
    } else {
        region_operator_ideal(p, z, dim)
    }
}

/// Compresses a Fock-basis operator `op` (on `op.nrows()` levels) into the
/// displaced frame: `[D(beta)^dagger op D(beta)]` restricted to `dim` levels.
pub fn to_displaced_frame(op: &CMat, beta: C64, dim: usize) -> CMat {
    let big = op.nrows();
    let d = displacement_matrix(beta, big);
    let cols = d.columns(0, dim).into_owned();
    hermitian_part(&(cols.adjoint() * op * cols))
}

/// Levels needed so that `D(beta)|n>`, `n < dim`, is captured to double precision.
pub fn frame_padding(beta: C64, dim: usize) -> usize {
    let b = beta.norm();
    20 + (8.0 * b * (dim as f64).sqrt() + 4.0 * b * b).ceil() as usize
}

/// Coefficients `A..E` of the bounded trusted observables
/// `[n]' = A n + B` and `[n^2]' = C n^2 + D n + E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableCoeffs {
    /// First-moment slope.
    pub a: f64,
    /// First-moment offset.
    pub b: f64,
    /// Second-moment quadratic coefficient.
    pub c: f64,
    /// Second-moment linear coefficient.
    pub d: f64,
    /// Second-moment offset.
    pub e: f64,
}

/// Bounded-observable coefficients for detection bound `m_cut`.
///
/// Each `e^{-M~^2}` multiplies its own correction fraction, so every correction
/// vanishes as `M~ -> inf` and the coefficients tend to the unbounded values
/// `(eta_d, nu_el, eta_d^2, 4 eta_d^2 c^2 - 3 eta_d - eta_d^2, 2 eta_d^2 c^4 - 3 eta_d c^2 + 1)`.
pub fn bounded_observable_coeffs(m_cut: f64, eta_d: f64, nu_el: f64) -> Result<ObservableCoeffs> {
    if !(m_cut > 0.0) {
        return Err(Error::Domain(format!("detection bound must be positive, got {m_cut}")));
    }
    let eta = eta_d;
    let c2 = (1.0 + nu_el) / eta;
    let c = c2.sqrt();
    let mt = m_cut / (eta.sqrt() * c);
    let ex = (-mt * mt).exp();
    let sp = PI.sqrt();
    let base = 1.0 - ex / (sp * mt);
    let a = eta * base;
    let b = eta * c2 * (1.0 - (2.0 * mt + 2.0 * mt * mt * sp + 2.0 * sp) / (PI * mt) * ex)
        + 2.0 * eta * c * (mt * mt * sp * eta + 1.0) / (sp * mt) * ex
        - (1.0 - 2.0 / (sp * mt) * ex);
    let cc = eta * eta * base;
    let d = eta
        * eta
        * (4.0 * c2 * (1.0 - (8.0 * mt * mt + 8.0 * mt + 1.0) / (4.0 * sp * mt) * ex)
            - 3.0 / eta * (1.0 - (9.0 * c2 + 4.0 * mt * mt) / (6.0 * sp * mt * c2) * ex)
            - base);
    let e = 2.0 * eta * eta * c2 * c2
        * (1.0 - (13.0 * sp - 3.0 * mt - 4.0 * mt * mt * sp * c2) / (8.0 * PI * mt) * ex)
        - 3.0 * eta * c2 * (1.0 - (3.0 - c2) / (2.0 * sp * mt) * ex)
        + (1.0
            - (eta * eta * c2 * c2 * mt.powi(4) + 3.0 * eta * c2 * mt * mt - 3.0 + 2.0 * eta * eta)
                / (sp * mt * eta * eta)
                * ex);
    Ok(ObservableCoeffs { a, b, c: cc, d, e })
}

/// Observable family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservableKind {
    /// Identity (trace).
    Identity,
    /// First moment of the displaced number operator.
    FirstMoment,
    /// Second moment of the displaced number operator.
    SecondMoment,
}

/// One observable `Gamma_j` on `A (x) B`.
#[derive(Debug, Clone)]
pub struct ObservableSpec {
    /// Observable family.
    pub kind: ObservableKind,
    /// Signal index `i` of `|i><i| (x) Op`, `None` for the identity.
    pub signal_index: Option<usize>,
    /// Operator in the displaced cutoff basis.
    pub operator: HermitianOp,
    /// Diagonal of `Op` in signal `i`'s displaced frame (empty for the identity).
    pub frame_diagonal: Vec<f64>,
    /// Operator sup-norm cap `x`.
    pub expected_bound: f64,
}

/// Displacements `beta_i = sqrt(eta) alpha_i` that centre each signal's frame.
pub fn frame_centers(p: &ProtocolParams, eta: f64) -> Vec<C64> {
    p.constellation().into_iter().map(|a| a * eta.sqrt()).collect()
}

/// Diagonals `(Op1, Op2)` in a displaced frame on `dim` levels.
pub fn moment_diagonals(p: &ProtocolParams, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = if p.trusted {
        bounded_observable_coeffs(p.m_cut, p.eta_d, p.nu_el)?
    } else {
        ObservableCoeffs { a: 1.0, b: 0.0, c: 1.0, d: 0.0, e: 0.0 }
    };
    let first = (0..dim).map(|n| k.a * n as f64 + k.b).collect();
    let second = (0..dim)
        .map(|n| {
            let nf = n as f64;
            k.c * nf * nf + k.d * nf + k.e
        })
        .collect();
    Ok((first, second))
}

/// Identity plus first and second moments for every signal.
pub fn observable_set(p: &ProtocolParams) -> Result<Vec<ObservableSpec>> {
    p.validate()?;
    let db = p.dim_b();
    let d = p.n_states * db;
    let m2 = p.m_cut * p.m_cut;
    let (first, second) = moment_diagonals(p, db)?;
    let mut out = vec![ObservableSpec {
        kind: ObservableKind::Identity,
        signal_index: None,
        operator: HermitianOp::identity(d),
        frame_diagonal: Vec::new(),
        expected_bound: 1.0,
    }];
    for i in 0..p.n_states {
        for (kind, diag, cap) in [
            (ObservableKind::FirstMoment, &first, m2 - 0.5),
            (ObservableKind::SecondMoment, &second, m2 * m2 - 0.5 * m2),
        ] {
            let mut m = CMat::zeros(d, d);
            for (n, v) in diag.iter().enumerate() {
                m[(i * db + n, i * db + n)] = C64::new(*v, 0.0);
            }
            out.push(ObservableSpec {
                kind,
                signal_index: Some(i),
                operator: HermitianOp::symmetrized(m, format!("{kind:?} signal {i}")),
                frame_diagonal: diag.clone(),
                expected_bound: cap,
            });
        }
    }
    Ok(out)
}

/// Key-map symbol of outcome `y`, `None` for the discard symbol.
pub fn keymap_classify(y: C64, delta_r: f64, m_cut: f64, n_states: usize) -> Option<usize> {
    let r = y.norm();
    if r < delta_r || r > m_cut {
        return None;
    }
    let width = 2.0 * PI / n_states as f64;
    let mut phi = y.arg();
    // Shift to [-width/2, 2 pi - width/2).
    if phi < -0.5 * width {
        phi += 2.0 * PI;
    }
    let z = ((phi + 0.5 * width) / width).floor() as usize;
    Some(z.min(n_states - 1))
}

/// Diagonal of the energy-test operator `V_1` (outcome radius at least
/// `beta_test` from the frame centre) on `dim` levels of a displaced frame.
pub fn v1_diagonal(p: &ProtocolParams, beta_test: f64, dim: usize) -> Result<Vec<f64>> {
    if p.trusted {
        let m = trusted_sector_operator(p, beta_test, f64::INFINITY, 0.0, 2.0 * PI, dim)?;
        Ok((0..dim).map(|n| m[(n, n)].re).collect())
    } else {
        (0..dim)
            .map(|n| crate::special::regularized_upper_gamma(n as f64 + 1.0, beta_test * beta_test))
            .collect()
    }
}

/// Smallest `r` with `W_1 <= r V_1`, where `W_1` projects onto `n >= n_c`:
/// the reciprocal of the least `V_1` eigenvalue over `n_c <= n < n_c + tail`.
pub fn r_factor_exact(p: &ProtocolParams, beta_test: f64, tail: usize) -> Result<f64> {
    let v = v1_diagonal(p, beta_test, p.n_c + tail.max(1))?;
    let least = v[p.n_c..].iter().cloned().fold(f64::INFINITY, f64::min);
    if !(least > 0.0) {
        return Err(Error::Domain(format!("V_1 eigenvalue {least} at beta_test = {beta_test}")));
    }
    Ok(1.0 / least)
}
