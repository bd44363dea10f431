//! Scenario configuration and the end-to-end key-rate pipeline: single
//! points, Cartesian sweeps and the `(alpha, delta_r)` grid search.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    expected_weight, honest_expectations, honest_state, honest_v1_expectation, outcome_distribution_and_ec,
    transmittance_from_distance, ChannelModel,
};
use crate::conic::{Backend, ConicSettings};
use crate::error::{Error, Result};
use crate::fock::CMat;
use crate::protocol::{observable_set, r_factor_exact, rho_alice, ObservableKind, ProtocolParams};
use crate::solver::{
    build_postprocessing_maps, solve_key_rate, ConstraintSet, KeyMaps, ObservableRow, SolveStatus, SolverReport,
    SolverSettings,
};
use crate::stats::{
    acceptance_mu, asymptotic_key_rate, choose_weight, completeness_bounds, key_length_per_round, r_factor,
    weight_from_epsilon, DetectorModel, EpsilonBudget, GammaConvention, KeyLengthInputs,
};

/// Channel section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Fibre length in km (0.2 dB/km).
    pub distance_km: f64,
    /// Transmittance; overrides `distance_km` when set.
    pub eta: Option<f64>,
    /// Excess noise in shot-noise units.
    pub xi: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { distance_km: 10.0, eta: None, xi: 0.01 }
    }
}

/// Protocol section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Coherent-state amplitude `|alpha|`.
    pub alpha: f64,
    /// Radial postselection parameter.
    pub delta_r: f64,
    /// Detection bound `M`.
    pub m_cut: f64,
    /// Photon-number cutoff.
    pub n_c: usize,
    /// Number of signal states (phase-shift keying).
    pub n_states: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { alpha: 0.85, delta_r: 0.45, m_cut: 5.0, n_c: 20, n_states: 4 }
    }
}

/// Detector section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Trusted noisy detector instead of ideal heterodyne.
    pub trusted: bool,
    /// Detector efficiency (used when `trusted`).
    pub eta_d: f64,
    /// Electronic noise (used when `trusted`).
    pub nu_el: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { trusted: false, eta_d: 0.72, nu_el: 0.04 }
    }
}

/// Test-plan section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Total number of rounds `N`.
    pub n_total: f64,
    /// Fraction of test rounds.
    pub r_test: f64,
    /// Ratio `l_T / k_T`.
    pub lt_ratio: f64,
    /// Energy-test radius; chosen automatically when absent.
    pub beta_test: Option<f64>,
    /// When set, the automatic radius is the smallest one (up to `m_cut`)
    /// whose energy-test abort bound is at most this value.
    pub eps_c_et_target: Option<f64>,
    /// Acceptance-test slack factor `t_F`; zero selects unique acceptance.
    pub t_factor: f64,
    /// Lower bound on the weight `w`.
    pub w_min: f64,
    /// Incomplete-gamma argument convention in the `r` factor.
    pub gamma_convention: GammaConvention,
    /// Asymptotic mode: no statistical radii, `n = N`, no finite-size terms.
    pub asymptotic: bool,
    /// Literal interval rows `[gamma + mu + t - w cap, gamma - mu - t]` (comparison mode).
    pub literal_primal: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            n_total: 1e10,
            r_test: 0.1,
            lt_ratio: 1e-8,
            beta_test: None,
            eps_c_et_target: None,
            t_factor: 0.0,
            w_min: 0.0,
            gamma_convention: GammaConvention::Squared,
            asymptotic: false,
            literal_primal: false,
        }
    }
}

/// Security-parameter section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Error-correction correctness.
    pub eps_ec: f64,
    /// Privacy amplification.
    pub eps_pa: f64,
    /// Smoothing.
    pub eps_bar: f64,
    /// Acceptance test.
    pub eps_at: f64,
    /// Energy test.
    pub eps_et: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = EpsilonBudget::default();
        Self { eps_ec: b.eps_ec, eps_pa: b.eps_pa, eps_bar: b.eps_bar, eps_at: b.eps_at, eps_et: b.eps_et }
    }
}

impl BudgetConfig {
    /// As an [`EpsilonBudget`].
    pub fn budget(&self) -> EpsilonBudget {
        EpsilonBudget {
            eps_ec: self.eps_ec,
            eps_pa: self.eps_pa,
            eps_bar: self.eps_bar,
            eps_at: self.eps_at,
            eps_et: self.eps_et,
        }
    }
}

/// Error-correction section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcConfig {
    /// Reconciliation efficiency `beta`.
    pub beta: f64,
    /// Honest error-correction failure probability in the completeness bound.
    pub eps_c_ec: f64,
}

impl Default for EcConfig {
    fn default() -> Self {
        Self { beta: 0.95, eps_c_ec: 0.0 }
    }
}

/// Numerical-solver section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Frank-Wolfe gap tolerance in bits.
    pub tol: f64,
    /// Frank-Wolfe iteration limit.
    pub max_iter: usize,
    /// Constraint relaxation in the dual bound.
    pub eps_num: f64,
    /// Largest accepted dual residual before repair.
    pub max_dual_residual: f64,
    /// Conic backend, `internal` or `external`.
    pub backend: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            eps_num: s.eps_num,
            max_dual_residual: s.max_dual_residual,
            backend: "internal".into(),
        }
    }
}

/// Sweep axes and optimizer grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Values of `N`.
    pub n_total: Vec<f64>,
    /// Fibre lengths in km.
    pub distance_km: Vec<f64>,
    /// Test fractions.
    pub r_test: Vec<f64>,
    /// Acceptance slack factors.
    pub t_factor: Vec<f64>,
    /// Amplitude grid of the optimizer.
    pub alpha_grid: Vec<f64>,
    /// Postselection grid of the optimizer.
    pub delta_r_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_total: Vec::new(),
            distance_km: Vec::new(),
            r_test: Vec::new(),
            t_factor: Vec::new(),
            alpha_grid: (0..=10).map(|k| (60 + 5 * k) as f64 / 100.0).collect(),
            delta_r_grid: (0..=6).map(|k| (15 * k) as f64 / 100.0).collect(),
        }
    }
}

/// Complete scenario; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Channel.
    pub channel: ChannelConfig,
    /// Protocol.
    pub protocol: ProtocolConfig,
    /// Detector.
    pub detector: DetectorConfig,
    /// Test plan.
    pub plan: PlanConfig,
    /// Security parameters.
    pub budget: BudgetConfig,
    /// Error correction.
    pub ec: EcConfig,
    /// Solver.
    pub solver: SolverConfig,
    /// Sweep axes.
    pub sweep: SweepConfig,
}

/// A configuration key that was absent from the input and took its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedDefault {
    /// Dotted key path.
    pub key: String,
    /// Value used.
    pub value: serde_json::Value,
}

impl ScenarioConfig {
    /// Parses TOML text, rejecting unknown keys, and lists the defaults applied.
    pub fn from_toml_str(text: &str) -> Result<(Self, Vec<AppliedDefault>)> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolved = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut defaults = Vec::new();
        if let serde_json::Value::Object(sections) = &resolved {
            for (section, fields) in sections {
                let present = raw.get(section).and_then(|v| v.as_table());
                if let serde_json::Value::Object(fields) = fields {
                    for (key, value) in fields {
                        if present.map_or(true, |t| !t.contains_key(key)) {
                            defaults.push(AppliedDefault { key: format!("{section}.{key}"), value: value.clone() });
                        }
                    }
                }
            }
        }
        cfg.validate()?;
        Ok((cfg, defaults))
    }

    /// Reads and parses a TOML file.
    pub fn from_file(path: &std::path::Path) -> Result<(Self, Vec<AppliedDefault>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Range checks on every field.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let c = &self.channel;
        if !(c.distance_km >= 0.0) || !(c.xi >= 0.0) {
            return bad("channel: distance_km and xi must be non-negative");
        }
        if let Some(eta) = c.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return bad("channel.eta must lie in (0, 1]");
            }
        }
        let p = &self.protocol;
        if !(p.alpha > 0.0) || !(p.delta_r >= 0.0) || !(p.m_cut > p.delta_r) || p.n_c < 1 || p.n_states < 2 {
            return bad("protocol: need alpha > 0, 0 <= delta_r < m_cut, n_c >= 1, n_states >= 2");
        }
        let d = &self.detector;
        if d.trusted && !(d.eta_d > 0.0 && d.eta_d <= 1.0 && d.nu_el >= 0.0) {
            return bad("detector: need 0 < eta_d <= 1 and nu_el >= 0");
        }
        let pl = &self.plan;
        if !(pl.n_total >= 1.0) || !(pl.r_test > 0.0 && pl.r_test < 1.0) {
            return bad("plan: need n_total >= 1 and 0 < r_test < 1");
        }
        if !(pl.lt_ratio >= 0.0 && pl.lt_ratio < 1.0) || !(pl.t_factor >= 0.0) || !(pl.w_min >= 0.0 && pl.w_min < 1.0) {
            return bad("plan: need 0 <= lt_ratio < 1, t_factor >= 0, 0 <= w_min < 1");
        }
        if let Some(b) = pl.beta_test {
            if !(b > 0.0 && b <= p.m_cut) {
                return bad("plan.beta_test must lie in (0, m_cut]");
            }
        }
        if let Some(t) = pl.eps_c_et_target {
            if !(t > 0.0 && t < 1.0) {
                return bad("plan.eps_c_et_target must lie in (0, 1)");
            }
        }
        self.budget.budget().validate()?;
        if !(self.ec.beta >= 0.0 && self.ec.beta <= 1.0) || !(self.ec.eps_c_ec >= 0.0 && self.ec.eps_c_ec <= 1.0) {
            return bad("ec: beta and eps_c_ec must lie in [0, 1]");
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 || !(s.eps_num >= 0.0) || !(s.max_dual_residual > 0.0) {
            return bad("solver: need tol > 0, max_iter > 0, eps_num >= 0, max_dual_residual > 0");
        }
        if s.backend != "internal" && s.backend != "external" {
            return bad("solver.backend must be 'internal' or 'external'");
        }
        for (name, axis) in [
            ("n_total", &self.sweep.n_total),
            ("distance_km", &self.sweep.distance_km),
            ("r_test", &self.sweep.r_test),
            ("t_factor", &self.sweep.t_factor),
        ] {
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("sweep.{name} contains a non-finite value")));
            }
        }
        Ok(())
    }

    /// Channel transmittance.
    pub fn eta(&self) -> f64 {
        self.channel.eta.unwrap_or_else(|| transmittance_from_distance(self.channel.distance_km))
    }

    /// Protocol parameters.
    pub fn protocol_params(&self) -> ProtocolParams {
        let pc = &self.protocol;
        let mut p = ProtocolParams::qpsk(pc.alpha, pc.delta_r, pc.m_cut, pc.n_c);
        if pc.n_states != p.n_states {
            p.n_states = pc.n_states;
            p.probs = vec![1.0 / pc.n_states as f64; pc.n_states];
        }
        if self.detector.trusted {
            p = p.with_trusted_detector(self.detector.eta_d, self.detector.nu_el);
        }
        p
    }

    /// Solver settings.
    pub fn solver_settings(&self) -> Result<SolverSettings> {
        Ok(SolverSettings {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            eps_num: self.solver.eps_num,
            max_dual_residual: self.solver.max_dual_residual,
            conic: ConicSettings::default(),
            backend: Backend::from_name(&self.solver.backend)?,
            ..SolverSettings::default()
        })
    }
}

/// Outcome class of one evaluated point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    /// Certified bound with positive key length.
    Certified,
    /// Certified bound (or a provably unusable test plan) giving no key.
    CleanNegative,
    /// The solver did not certify a bound.
    SolverFailed,
    /// The constraint set is empty.
    Infeasible,
    /// Invalid input or numerical error.
    Error,
}

impl PointStatus {
    /// True for statuses that count as a completed run.
    pub fn is_success(&self) -> bool {
        matches!(self, PointStatus::Certified | PointStatus::CleanNegative)
    }

    /// Snake-case name.
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Certified => "certified",
            PointStatus::CleanNegative => "clean_negative",
            PointStatus::SolverFailed => "solver_failed",
            PointStatus::Infeasible => "infeasible",
            PointStatus::Error => "error",
        }
    }
}

/// Inputs and results of one point; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Fibre length in km.
    pub distance_km: f64,
    /// Transmittance.
    pub eta: f64,
    /// Excess noise.
    pub xi: f64,
    /// Amplitude.
    pub alpha: f64,
    /// Postselection parameter.
    pub delta_r: f64,
    /// Detection bound.
    pub m_cut: f64,
    /// Photon-number cutoff.
    pub n_c: usize,
    /// Number of signal states.
    pub n_states: usize,
    /// Trusted-detector flag.
    pub trusted: bool,
    /// Detector efficiency in effect.
    pub eta_d: f64,
    /// Electronic noise in effect.
    pub nu_el: f64,
    /// Total rounds.
    pub n_total: f64,
    /// Test fraction.
    pub r_test: f64,
    /// Test rounds `k_T`.
    pub k_t: f64,
    /// Key rounds `n`.
    pub n_key: f64,
    /// Energy-test threshold `l_T`.
    pub l_t: f64,
    /// Energy-test radius.
    pub beta_test: f64,
    /// Acceptance slack factor.
    pub t_factor: f64,
    /// Weight floor.
    pub w_min: f64,
    /// Reconciliation efficiency.
    pub beta_ec: f64,
    /// Error-correction correctness.
    pub eps_ec: f64,
    /// Privacy amplification.
    pub eps_pa: f64,
    /// Smoothing.
    pub eps_bar: f64,
    /// Acceptance test.
    pub eps_at: f64,
    /// Energy test.
    pub eps_et: f64,
    /// Incomplete-gamma convention.
    pub gamma_convention: GammaConvention,
    /// Asymptotic mode.
    pub asymptotic: bool,
    /// Literal interval rows `[gamma + mu + t - w cap, gamma - mu - t]`.
    pub literal_primal: bool,
    /// Frank-Wolfe tolerance.
    pub solver_tol: f64,
    /// Dual relaxation.
    pub eps_num: f64,
    /// `r` factor of the energy test.
    pub r_factor: f64,
    /// Honest weight outside the cutoff.
    pub w_exp: f64,
    /// Weight required by the energy-test epsilon.
    pub w_eps: f64,
    /// Weight used.
    pub w: f64,
    /// Energy-test abort bound, empty when the honest run is expected to abort.
    pub eps_c_et: Option<f64>,
    /// Acceptance-test abort bound.
    pub eps_c_at: f64,
    /// Error-correction abort contribution.
    pub eps_c_ec: f64,
    /// Total abort bound.
    pub nu_c: f64,
    /// Postselection pass probability.
    pub p_pass: f64,
    /// Error-correction leakage per key round.
    pub leak_per_key_round: f64,
    /// Frank-Wolfe primal value.
    pub primal_value: f64,
    /// Certified conditional-entropy bound `H`.
    pub h_lower_bound: f64,
    /// Final Frank-Wolfe gap.
    pub fw_gap: f64,
    /// Dual residual before repair.
    pub dual_residual: f64,
    /// Frank-Wolfe iterations.
    pub fw_iterations: usize,
    /// AEP correction.
    pub delta_aep: f64,
    /// Cutoff penalty.
    pub delta_w: f64,
    /// Signed `l/N`.
    pub key_rate: f64,
    /// `max(l/N, 0)`.
    pub key_rate_clamped: f64,
    /// `(1 - nu_c) max(l/N, 0)`.
    pub expected_rate: f64,
    /// Point status.
    pub status: PointStatus,
    /// Solver status name.
    pub solver_status: String,
    /// Diagnostic text.
    pub message: String,
    /// Wall time in seconds.
    pub wall_time_s: f64,
}

impl KeyRateReport {
    /// Report echoing the inputs of `cfg` with every result unset.
    pub fn from_inputs(cfg: &ScenarioConfig) -> Self {
        let (eta_d, nu_el) = if cfg.detector.trusted { (cfg.detector.eta_d, cfg.detector.nu_el) } else { (1.0, 0.0) };
        let pl = &cfg.plan;
        let k_t = (pl.r_test * pl.n_total).round();
        Self {
            distance_km: cfg.channel.distance_km,
            eta: cfg.eta(),
            xi: cfg.channel.xi,
            alpha: cfg.protocol.alpha,
            delta_r: cfg.protocol.delta_r,
            m_cut: cfg.protocol.m_cut,
            n_c: cfg.protocol.n_c,
            n_states: cfg.protocol.n_states,
            trusted: cfg.detector.trusted,
            eta_d,
            nu_el,
            n_total: pl.n_total,
            r_test: pl.r_test,
            k_t,
            n_key: pl.n_total - k_t,
            l_t: (pl.lt_ratio * k_t).ceil(),
            beta_test: pl.beta_test.unwrap_or(f64::NAN),
            t_factor: pl.t_factor,
            w_min: pl.w_min,
            beta_ec: cfg.ec.beta,
            eps_ec: cfg.budget.eps_ec,
            eps_pa: cfg.budget.eps_pa,
            eps_bar: cfg.budget.eps_bar,
            eps_at: cfg.budget.eps_at,
            eps_et: cfg.budget.eps_et,
            gamma_convention: pl.gamma_convention,
            asymptotic: pl.asymptotic,
            literal_primal: pl.literal_primal,
            solver_tol: cfg.solver.tol,
            eps_num: cfg.solver.eps_num,
            r_factor: f64::NAN,
            w_exp: f64::NAN,
            w_eps: f64::NAN,
            w: f64::NAN,
            eps_c_et: None,
            eps_c_at: f64::NAN,
            eps_c_ec: cfg.ec.eps_c_ec,
            nu_c: f64::NAN,
            p_pass: f64::NAN,
            leak_per_key_round: f64::NAN,
            primal_value: f64::NAN,
            h_lower_bound: f64::NAN,
            fw_gap: f64::NAN,
            dual_residual: f64::NAN,
            fw_iterations: 0,
            delta_aep: f64::NAN,
            delta_w: f64::NAN,
            key_rate: f64::NAN,
            key_rate_clamped: 0.0,
            expected_rate: 0.0,
            status: PointStatus::Error,
            solver_status: String::new(),
            message: String::new(),
            wall_time_s: 0.0,
        }
    }
}

/// Energy-test radius giving an honest exceedance probability of
/// `(l_T + 1) / (2 k_T)`, capped at `m_cut`.
pub fn auto_beta_test(p: &ProtocolParams, ch: &ChannelModel, k_t: f64, l_t: f64) -> f64 {
    let spread = if p.trusted { 1.0 + p.nu_el + p.eta_d * ch.nbar() } else { 1.0 + ch.nbar() };
    let target = 0.5 * (l_t + 1.0) / k_t;
    let log_term = (1.0 / target).ln().max(std::f64::consts::LN_2);
    (spread * log_term).sqrt().min(p.m_cut)
}

/// Smallest radius in `[auto_beta_test, m_cut]` whose honest energy-test
/// abort bound is at most `target`; `auto_beta_test` when none is.
pub fn completeness_beta_test(p: &ProtocolParams, ch: &ChannelModel, k_t: f64, l_t: f64, target: f64) -> Result<f64> {
    let spread = if p.trusted { 1.0 + p.nu_el + p.eta_d * ch.nbar() } else { 1.0 + ch.nbar() };
    let base = auto_beta_test(p, ch, k_t, l_t);
    let bound = |beta: f64| -> Result<f64> {
        let v1 = (-beta * beta / spread).exp();
        Ok(completeness_bounds(k_t, l_t, v1, &[], 0.0)?.eps_c_et.unwrap_or(f64::INFINITY))
    };
    if bound(p.m_cut)? > target {
        return Ok(base);
    }
    let (mut lo, mut hi) = (base, p.m_cut);
    if bound(lo)? <= target {
        return Ok(lo);
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if bound(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Levels beyond the cutoff scanned when bounding `r` exactly.
const R_FACTOR_TAIL: usize = 64;

/// Evaluates one point; errors become a report with status `error`.
pub fn evaluate_point(cfg: &ScenarioConfig) -> KeyRateReport {
    let start = Instant::now();
    let mut report = match run_point(cfg) {
        Ok(r) => r,
        Err(e) => {
            let mut r = KeyRateReport::from_inputs(cfg);
            r.status = PointStatus::Error;
            r.message = e.to_string();
            r
        }
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    report
}

/// Cutoff-space optimisation problem of one point.
#[derive(Debug, Clone)]
pub struct PointProblem {
    /// Feasible set.
    pub constraints: ConstraintSet,
    /// Key maps.
    pub maps: KeyMaps,
    /// Honest state used as the starting point.
    pub start: CMat,
    /// Solver settings.
    pub settings: SolverSettings,
}

/// A point with all statistics computed and the solver not yet run.
#[derive(Debug, Clone)]
pub struct PreparedPoint {
    /// Partially filled report.
    pub report: KeyRateReport,
    /// `None` when the point was decided without the solver.
    pub problem: Option<PointProblem>,
    budget: EpsilonBudget,
    alphabet: usize,
    asymptotic: bool,
    started: Instant,
}

/// Runs the full pipeline for one configuration.
pub fn run_point(cfg: &ScenarioConfig) -> Result<KeyRateReport> {
    let prep = prepare_point(cfg)?;
    let sol = match &prep.problem {
        Some(pp) => Some(solve_key_rate(&pp.start, &pp.constraints, &pp.maps, &pp.settings)?),
        None => None,
    };
    Ok(finish_point(prep, sol.as_ref()))
}

/// Statistics, weight, completeness and constraint set of one point.
pub fn prepare_point(cfg: &ScenarioConfig) -> Result<PreparedPoint> {
    let start = Instant::now();
    cfg.validate()?;
    let mut rep = KeyRateReport::from_inputs(cfg);
    let p = cfg.protocol_params();
    p.validate()?;
    let ch = ChannelModel { eta: cfg.eta(), xi: cfg.channel.xi };
    let budget = cfg.budget.budget();
    let pl = &cfg.plan;

    // Honest statistics.
    let stats = outcome_distribution_and_ec(&p, &ch, cfg.ec.beta)?;
    rep.p_pass = stats.p_pass;
    rep.leak_per_key_round = stats.leak_per_round;
    let obs = observable_set(&p)?;
    let gammas = honest_expectations(&p, &ch, &obs);

    // Test plan and weight.
    let (k_t, l_t) = (rep.k_t, rep.l_t);
    if !(k_t >= 1.0) || !(rep.n_key >= 1.0) {
        return Err(Error::Config(format!("test plan leaves k_T = {k_t}, n = {}", rep.n_key)));
    }
    let beta_test = match (pl.beta_test, pl.eps_c_et_target) {
        (Some(b), _) => b,
        (None, Some(target)) => completeness_beta_test(&p, &ch, k_t, l_t, target)?,
        (None, None) => auto_beta_test(&p, &ch, k_t, l_t),
    };
    rep.beta_test = beta_test;
    let r = match (p.trusted, pl.gamma_convention) {
        (true, GammaConvention::Squared) => r_factor_exact(&p, beta_test, R_FACTOR_TAIL)?,
        (true, conv) => r_factor(p.n_c, beta_test, DetectorModel::Trusted { eta_d: p.eta_d, nu_el: p.nu_el }, conv)?,
        (false, conv) => r_factor(p.n_c, beta_test, DetectorModel::Ideal, conv)?,
    };
    rep.r_factor = r;
    rep.w_exp = expected_weight(ch.nbar(), p.n_c);
    let w_sol = weight_from_epsilon(budget.eps_et, k_t, l_t, r)?;
    rep.w_eps = w_sol.w;
    let w = choose_weight(rep.w_exp, w_sol.w, pl.w_min);
    rep.w = w;

    // Statistical radii; each moment observable is estimated from k_T p_i rounds.
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    for (o, &gamma) in obs.iter().zip(&gammas) {
        if o.kind == ObservableKind::Identity {
            continue;
        }
        let p_i = o.signal_index.map_or(1.0, |i| p.probs[i]);
        let m_x = k_t * p_i;
        let mu_cond = acceptance_mu(o.expected_bound, m_x, budget.eps_at, true)?;
        tests.push((m_x, pl.t_factor * mu_cond, o.expected_bound));
        let (mu, t) = if pl.asymptotic { (0.0, 0.0) } else { (p_i * mu_cond, pl.t_factor * p_i * mu_cond) };
        rows.push(ObservableRow { operator: o.operator.entries().clone(), gamma, mu, t, cap: o.expected_bound });
    }

    // Completeness.
    let v1 = honest_v1_expectation(&p, &ch, beta_test)?;
    let comp = completeness_bounds(k_t, l_t, v1, &tests, cfg.ec.eps_c_ec)?;
    rep.eps_c_et = comp.eps_c_et;
    rep.eps_c_at = comp.eps_c_at;
    rep.eps_c_ec = comp.eps_c_ec;
    rep.nu_c = comp.nu_c;

    let mut prep = PreparedPoint {
        report: rep,
        problem: None,
        budget,
        alphabet: p.n_states,
        asymptotic: pl.asymptotic,
        started: start,
    };
    if w_sol.saturated || w >= 1.0 {
        prep.report.status = PointStatus::CleanNegative;
        prep.report.solver_status = "not_run".into();
        prep.report.message = "energy test cannot reach eps_ET with w < 1".into();
        return Ok(prep);
    }

    let constraints = ConstraintSet {
        rho_a: rho_alice(&p)?.into_matrix(),
        observables: rows,
        w,
        dims: (p.n_states, p.dim_b()),
        literal: pl.literal_primal,
    };
    prep.problem = Some(PointProblem {
        constraints,
        maps: build_postprocessing_maps(&p, ch.eta)?,
        start: honest_state(&p, &ch)?,
        settings: cfg.solver_settings()?,
    });
    Ok(prep)
}

/// Completes a prepared point from the solver outcome.
pub fn finish_point(prep: PreparedPoint, sol: Option<&SolverReport>) -> KeyRateReport {
    let mut rep = prep.report;
    let Some(sol) = sol else {
        rep.wall_time_s = prep.started.elapsed().as_secs_f64();
        return rep;
    };
    rep.solver_status = sol.status.as_str().into();
    rep.primal_value = sol.primal_value;
    rep.fw_gap = sol.fw_gap;
    rep.dual_residual = sol.dual_feasibility_residual;
    rep.fw_iterations = sol.iterations;
    match sol.status {
        SolveStatus::Certified => {}
        SolveStatus::Infeasible => {
            rep.status = PointStatus::Infeasible;
            rep.message = "constraint set is empty".into();
            rep.wall_time_s = prep.started.elapsed().as_secs_f64();
            return rep;
        }
        _ => {
            rep.status = PointStatus::SolverFailed;
            rep.message = "dual bound not certified".into();
            rep.wall_time_s = prep.started.elapsed().as_secs_f64();
            return rep;
        }
    }
    let h = sol.certified_lower_bound;
    rep.h_lower_bound = h;

    let kl = if prep.asymptotic {
        asymptotic_key_rate(h, rep.leak_per_key_round, rep.w, prep.alphabet)
    } else {
        key_length_per_round(&KeyLengthInputs {
            h,
            n_total: rep.n_total,
            n_key: rep.n_key,
            budget: prep.budget,
            w: rep.w,
            leak_per_key_round: rep.leak_per_key_round,
            alphabet_size: prep.alphabet,
        })
    };
    rep.delta_aep = kl.delta_aep;
    rep.delta_w = kl.delta_w;
    rep.key_rate = kl.raw;
    rep.key_rate_clamped = kl.clamped;
    rep.expected_rate = (1.0 - rep.nu_c) * kl.clamped;
    rep.status = if kl.raw > 0.0 { PointStatus::Certified } else { PointStatus::CleanNegative };
    rep.wall_time_s = prep.started.elapsed().as_secs_f64();
    rep
}

/// Sweep axes in column order.
pub const SWEEP_AXES: [&str; 4] = ["n_total", "distance_km", "r_test", "t_factor"];

/// Cartesian product of the sweep axes (outermost `n_total`, innermost
/// `t_factor`); an empty axis keeps the base value.
pub fn sweep_points(cfg: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let axis = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
    let s = &cfg.sweep;
    let mut out = Vec::new();
    for &n in &axis(&s.n_total, cfg.plan.n_total) {
        for &l in &axis(&s.distance_km, cfg.channel.distance_km) {
            for &r in &axis(&s.r_test, cfg.plan.r_test) {
                for &t in &axis(&s.t_factor, cfg.plan.t_factor) {
                    let mut c = cfg.clone();
                    c.plan.n_total = n;
                    if !s.distance_km.is_empty() {
                        c.channel.distance_km = l;
                        c.channel.eta = None;
                    }
                    c.plan.r_test = r;
                    c.plan.t_factor = t;
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Evaluates configurations in parallel; results keep input order and
/// `on_done(index, report)` fires as each point finishes.
pub fn evaluate_all<F>(points: &[ScenarioConfig], on_done: F) -> Vec<KeyRateReport>
where
    F: Fn(usize, &KeyRateReport) + Sync,
{
    points
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let r = evaluate_point(c);
            on_done(i, &r);
            r
        })
        .collect()
}

/// Evaluates every sweep point.
pub fn sweep<F>(cfg: &ScenarioConfig, on_done: F) -> Vec<KeyRateReport>
where
    F: Fn(usize, &KeyRateReport) + Sync,
{
    evaluate_all(&sweep_points(cfg), on_done)
}

/// Figure of merit of the grid search: expected rate with a slack factor,
/// signed key rate under unique acceptance. Failed points score `-inf`.
pub fn optimization_score(r: &KeyRateReport) -> f64 {
    if !r.status.is_success() {
        return f64::NEG_INFINITY;
    }
    let v = if r.t_factor > 0.0 { r.expected_rate } else { r.key_rate };
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Index of the best report; ties go to smaller `alpha`, then smaller `delta_r`.
pub fn select_best(reports: &[KeyRateReport]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (sb, si) = (optimization_score(&reports[b]), optimization_score(r));
                let key = |x: &KeyRateReport| (x.alpha, x.delta_r);
                if si > sb || (si == sb && key(r) < key(&reports[b])) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Exhaustive `(alpha, delta_r)` grid search at `cfg`. Returns the best
/// report and every evaluated cell (alpha outer, delta_r inner).
pub fn optimize_amplitude_postselection<F>(
    cfg: &ScenarioConfig,
    alpha_grid: &[f64],
    delta_r_grid: &[f64],
    on_done: F,
) -> Result<(KeyRateReport, Vec<KeyRateReport>)>
where
    F: Fn(usize, &KeyRateReport) + Sync,
{
    if alpha_grid.is_empty() || delta_r_grid.is_empty() {
        return Err(Error::Config("optimizer grids must be nonempty".into()));
    }
    let mut cells = Vec::with_capacity(alpha_grid.len() * delta_r_grid.len());
    for &a in alpha_grid {
        for &d in delta_r_grid {
            let mut c = cfg.clone();
            c.protocol.alpha = a;
            c.protocol.delta_r = d;
            cells.push(c);
        }
    }
    let all = evaluate_all(&cells, on_done);
    let best = select_best(&all).expect("nonempty grid");
    Ok((all[best].clone(), all))
}

/// Counts of each status.
pub fn status_counts(reports: &[KeyRateReport]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in reports {
        *m.entry(r.status.as_str().to_string()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_rejected() {
        assert!(ScenarioConfig::from_toml_str("[plan]\nepsilon_et = 1e-10\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[nope]\nx = 1\n").is_err());
    }

    #[test]
    fn defaults_are_listed() {
        let (cfg, defaults) = ScenarioConfig::from_toml_str("[channel]\nxi = 0.02\n").unwrap();
        assert_eq!(cfg.channel.xi, 0.02);
        assert!(defaults.iter().any(|d| d.key == "plan.lt_ratio"));
        assert!(defaults.iter().all(|d| d.key != "channel.xi"));
        let (_, all) = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(all.len(), defaults.len() + 1);
    }

    #[test]
    fn default_grids() {
        let s = SweepConfig::default();
        assert_eq!(s.alpha_grid.len(), 11);
        assert_eq!(s.alpha_grid[10], 1.1);
        assert_eq!(s.delta_r_grid, vec![0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9]);
    }

    #[test]
    fn sweep_order_and_empty_axes() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(sweep_points(&cfg).len(), 1);
        cfg.sweep.n_total = vec![1e8, 1e9];
        cfg.sweep.r_test = vec![0.1, 0.2, 0.3];
        let pts = sweep_points(&cfg);
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[1].plan.n_total, pts[1].plan.r_test), (1e8, 0.2));
        assert_eq!((pts[3].plan.n_total, pts[3].plan.r_test), (1e9, 0.1));
    }

    #[test]
    fn tie_breaking() {
        let base = ScenarioConfig::default();
        let mk = |a: f64, d: f64, rate: f64| {
            let mut r = KeyRateReport::from_inputs(&base);
            r.alpha = a;
            r.delta_r = d;
            r.key_rate = rate;
            r.status = PointStatus::Certified;
            r
        };
        let reps = vec![mk(0.9, 0.3, 0.1), mk(0.7, 0.6, 0.1), mk(0.7, 0.3, 0.1), mk(1.0, 0.0, 0.05)];
        assert_eq!(select_best(&reps), Some(2));
    }

    #[test]
    fn auto_beta_hits_target() {
        let p = ProtocolParams::qpsk(0.85, 0.45, 5.0, 6);
        let ch = ChannelModel::from_distance(10.0, 0.01);
        let b = auto_beta_test(&p, &ch, 2e8, 2.0);
        let v1 = honest_v1_expectation(&p, &ch, b).unwrap();
        assert!((v1 / 7.5e-9 - 1.0).abs() < 1e-6, "{v1}");
    }
}
