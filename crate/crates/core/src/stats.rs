//! Finite-size statistics: energy test, acceptance test, correction terms,
//! completeness and the key-length formula.

use crate::error::{Error, Result};
use crate::special::{binary_entropy, regularized_upper_gamma};

impl std::str::FromStr for GammaConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(GammaConvention::Squared),
            "literal" => Ok(GammaConvention::Literal),
            other => Err(Error::Config(format!("unknown gamma convention '{other}'"))),
        }
    }
}

/// Security parameters of the individual protocol steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    /// Error-correction correctness.
    pub eps_ec: f64,
    /// Privacy amplification.
    pub eps_pa: f64,
    /// Smoothing parameter.
    pub eps_bar: f64,
    /// Acceptance test.
    pub eps_at: f64,
    /// Energy test.
    pub eps_et: f64,
}

impl Default for EpsilonBudget {
    fn default() -> Self {
        Self { eps_ec: 0.2e-10, eps_pa: 0.2e-10, eps_bar: 0.7e-10, eps_at: 0.7e-10, eps_et: 0.1e-10 }
    }
}

impl EpsilonBudget {
    /// Composed security parameter `eps_EC + max(eps_PA/2 + eps_bar, eps_ET + eps_AT)`.
    pub fn total(&self) -> f64 {
        self.eps_ec + (0.5 * self.eps_pa + self.eps_bar).max(self.eps_et + self.eps_at)
    }

    /// Checks that every component lies in `(0, 1)`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_ec", self.eps_ec),
            ("eps_pa", self.eps_pa),
            ("eps_bar", self.eps_bar),
            ("eps_at", self.eps_at),
            ("eps_et", self.eps_et),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} not in (0,1)")));
            }
        }
        Ok(())
    }
}

/// Argument convention of the incomplete gamma function in the `r` factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaConvention {
    /// `Gamma(n_c+1, beta_test^2)`.
    #[default]
    Squared,
    /// `Gamma(n_c+1, beta_test)`.
    Literal,
}

/// Detector model entering the `r` factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorModel {
    /// Ideal heterodyne detection.
    Ideal,
    /// Trusted detector with efficiency and electronic noise.
    Trusted {
        /// Efficiency.
        eta_d: f64,
        /// Electronic noise.
        nu_el: f64,
    },
}

/// Binary relative entropy `D((1-p, p) || (1-q, q))` in bits.
pub fn binary_kl(p: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("q = {q} not in (0,1)")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} not in [0,1]")));
    }
    let ln2 = std::f64::consts::LN_2;
    let first = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let second = if p < 1.0 { (1.0 - p) * ((-p).ln_1p() - (-q).ln_1p()) } else { 0.0 };
    Ok((first + second) / ln2)
}

/// Ratio `r` with `W_1 <= r V_1` for the energy test.
pub fn r_factor(n_c: usize, beta_test: f64, detector: DetectorModel, conv: GammaConvention) -> Result<f64> {
    if !(beta_test > 0.0) {
        return Err(Error::Domain(format!("beta_test = {beta_test} must be positive")));
    }
    let arg = match conv {
        GammaConvention::Squared => beta_test * beta_test,
        GammaConvention::Literal => beta_test,
    };
    let scale = match detector {
        DetectorModel::Ideal => 1.0,
        DetectorModel::Trusted { eta_d, nu_el } => {
            let nbar = (1.0 - eta_d + nu_el) / eta_d;
            1.0 / (eta_d * (1.0 + nbar))
        }
    };
    Ok(1.0 / regularized_upper_gamma(n_c as f64 + 1.0, scale * arg)?)
}

/// `log2` of the energy-test bound `(l+1) 2^{-k D(l/k || q)}` with `q = w/r`.
pub fn energy_test_log2_epsilon(k_t: f64, l_t: f64, w_over_r: f64) -> Result<f64> {
    if !(k_t >= 1.0) || !(l_t >= 0.0) || l_t > k_t {
        return Err(Error::Domain(format!("need 0 <= l_T <= k_T, k_T >= 1; got {l_t}, {k_t}")));
    }
    if !(w_over_r > l_t / k_t) || !(w_over_r <= 1.0) {
        return Err(Error::Precondition(format!(
            "energy test needs l_T/k_T = {:e} < w/r = {w_over_r:e} <= 1",
            l_t / k_t
        )));
    }
    if w_over_r == 1.0 {
        return Ok(if l_t == 0.0 { f64::NEG_INFINITY } else { (l_t + 1.0).log2() - f64::INFINITY });
    }
    Ok((l_t + 1.0).log2() - k_t * binary_kl(l_t / k_t, w_over_r)?)
}

/// Energy-test failure probability `(l+1) 2^{-k D(P_l || Q_{w/r})}`.
pub fn energy_test_epsilon(k_t: f64, l_t: f64, w: f64, r: f64) -> Result<f64> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::Domain(format!("w = {w} not in (0,1]")));
    }
    Ok(energy_test_log2_epsilon(k_t, l_t, (w / r).min(1.0))?.exp2())
}

/// Weight solved from a target energy-test epsilon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSolution {
    /// Smallest admissible weight (capped at 1).
    pub w: f64,
    /// True when no `w <= 1` reaches the target.
    pub saturated: bool,
}

/// Smallest `w` with `energy_test_epsilon(k, l, w, r) <= eps_target`.
pub fn weight_from_epsilon(eps_target: f64, k_t: f64, l_t: f64, r: f64) -> Result<WeightSolution> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::Domain(format!("eps_target = {eps_target} not in (0,1)")));
    }
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("r = {r} < 1")));
    }
    let target = eps_target.log2();
    if l_t == 0.0 {
        let q = -(eps_target.ln() / k_t).exp_m1();
        let w = r * q;
        return Ok(WeightSolution { w: w.min(1.0), saturated: w > 1.0 });
    }
    let q_max = (1.0 / r).min(1.0);
    let at = |q: f64| energy_test_log2_epsilon(k_t, l_t, q);
    if at(q_max)? > target {
        return Ok(WeightSolution { w: 1.0, saturated: true });
    }
    // Bisect ln q over (ln(l/k), ln q_max]; the bound decreases in q.
    let mut lo = (l_t / k_t).ln();
    let mut hi = q_max.ln();
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if at(mid.exp())? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(WeightSolution { w: r * hi.exp(), saturated: false })
}

/// `max(w_exp, w_eps, w_min)`.
pub fn choose_weight(w_exp: f64, w_eps: f64, w_min: f64) -> f64 {
    w_exp.max(w_eps).max(w_min)
}

/// Acceptance radius `sqrt(2 x^2 / m ln(2/eps))`, or `sqrt(x^2/(2m) ln(2/eps))` for PSD observables.
pub fn acceptance_mu(x: f64, m_x: f64, eps_at: f64, psd: bool) -> Result<f64> {
    if !(m_x >= 1.0) {
        return Err(Error::Domain(format!("m_X = {m_x} < 1")));
    }
    if !(eps_at > 0.0 && eps_at <= 2.0) {
        return Err(Error::Domain(format!("eps_AT = {eps_at} not in (0,2]")));
    }
    let l = (2.0 / eps_at).ln();
    let var = if psd { x * x / (2.0 * m_x) } else { 2.0 * x * x / m_x };
    Ok((var * l).sqrt())
}

/// Intervals `[gamma - mu - t, gamma + mu + t]`.
pub fn acceptance_set(gamma: &[f64], mu: &[f64], t: &[f64]) -> Result<Vec<(f64, f64)>> {
    if gamma.len() != mu.len() || gamma.len() != t.len() {
        return Err(Error::Dimension("gamma, mu and t lengths differ".into()));
    }
    Ok(gamma.iter().zip(mu).zip(t).map(|((g, m), t)| (g - m - t, g + m + t)).collect())
}

/// Dimension-reduction penalty `sqrt(w) log2|Z| + (1+sqrt(w)) h(sqrt(w)/(1+sqrt(w)))`.
pub fn delta_w(w: f64, alphabet_size: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let s = w.sqrt();
    s * (alphabet_size as f64).log2() + (1.0 + s) * binary_entropy(s / (1.0 + s))
}

/// AEP correction `2 log2(rank + 3) sqrt(log2(2/eps_bar) / n)`.
pub fn delta_aep(eps_bar: f64, n: f64, rank_x: usize) -> f64 {
    if n.is_infinite() {
        return 0.0;
    }
    2.0 * (rank_x as f64 + 3.0).log2() * ((2.0 / eps_bar).log2() / n).sqrt()
}

/// Completeness of the honest implementation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completeness {
    /// Energy-test abort bound, `None` when the honest exceedance probability
    /// is not below `(l_T+1)/k_T` (the protocol is expected to abort).
    pub eps_c_et: Option<f64>,
    /// Acceptance-test abort bound.
    pub eps_c_at: f64,
    /// Error-correction failure probability.
    pub eps_c_ec: f64,
    /// Total abort bound, capped at 1.
    pub nu_c: f64,
}

/// Abort probabilities for the honest implementation.
///
/// `v1_expect` is the honest probability that a test outcome exceeds
/// `beta_test`; `tests` lists `(m_X, t_X, x)` for each tested observable.
pub fn completeness_bounds(
    k_t: f64,
    l_t: f64,
    v1_expect: f64,
    tests: &[(f64, f64, f64)],
    eps_c_ec: f64,
) -> Result<Completeness> {
    let eps_c_et = if v1_expect > 0.0 && v1_expect < (l_t + 1.0) / k_t {
        let d = binary_kl((l_t + 1.0) / k_t, v1_expect)?;
        Some(((k_t - l_t - 1.0).max(0.0).log2() - k_t * d).exp2())
    } else if v1_expect == 0.0 {
        Some(0.0)
    } else {
        None
    };
    let eps_c_at: f64 = tests
        .iter()
        .map(|&(m, t, x)| 2.0 * (-2.0 * m * t * t / (4.0 * x * x)).exp())
        .sum();
    let nu_c = match eps_c_et {
        Some(e) => (e + eps_c_at + eps_c_ec).min(1.0),
        None => 1.0,
    };
    Ok(Completeness { eps_c_et, eps_c_at, eps_c_ec, nu_c })
}

/// Simplified acceptance-test abort bound `2 |Theta| (eps_AT/2)^{t_F^2/4}`.
pub fn nonunique_abort_bound(n_observables: usize, eps_at: f64, t_factor: f64) -> f64 {
    2.0 * n_observables as f64 * (0.5 * eps_at).powf(0.25 * t_factor * t_factor)
}

/// Inputs of the key-length formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyLengthInputs {
    /// Certified lower bound on the conditional entropy per round.
    pub h: f64,
    /// Total number of rounds `N`.
    pub n_total: f64,
    /// Number of key rounds `n`.
    pub n_key: f64,
    /// Security parameters.
    pub budget: EpsilonBudget,
    /// Weight outside the cutoff space.
    pub w: f64,
    /// Error-correction cost per key round, `p_pass * delta_EC`.
    pub leak_per_key_round: f64,
    /// Key alphabet size `|Z|`.
    pub alphabet_size: usize,
}

/// Terms of the key-length formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyLength {
    /// Signed `l/N`.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub clamped: f64,
    /// AEP correction.
    pub delta_aep: f64,
    /// Dimension-reduction penalty.
    pub delta_w: f64,
    /// Error-correction leakage per round `N`.
    pub leak: f64,
    /// Privacy-amplification term per round `N`.
    pub pa: f64,
}

/// `l/N = (n/N)[H - delta(eps_bar) - Delta(w)] - delta_leak - (2/N) log2(1/eps_PA)`.
pub fn key_length_per_round(k: &KeyLengthInputs) -> KeyLength {
    let frac = k.n_key / k.n_total;
    let d_aep = delta_aep(k.budget.eps_bar, k.n_key, k.alphabet_size);
    let d_w = delta_w(k.w, k.alphabet_size);
    let leak = frac * k.leak_per_key_round + (2.0 / k.budget.eps_ec).log2() / k.n_total;
    let pa = 2.0 / k.n_total * (1.0 / k.budget.eps_pa).log2();
    let raw = frac * (k.h - d_aep - d_w) - leak - pa;
    KeyLength { raw, clamped: raw.max(0.0), delta_aep: d_aep, delta_w: d_w, leak, pa }
}

/// Asymptotic counterpart `H - leak - Delta(w)` with `n = N` and no finite terms.
pub fn asymptotic_key_rate(h: f64, leak_per_key_round: f64, w: f64, alphabet_size: usize) -> KeyLength {
    let d_w = delta_w(w, alphabet_size);
    let raw = h - d_w - leak_per_key_round;
    KeyLength { raw, clamped: raw.max(0.0), delta_aep: 0.0, delta_w: d_w, leak: leak_per_key_round, pa: 0.0 }
}
