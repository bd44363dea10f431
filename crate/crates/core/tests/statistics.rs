mod common;

use common::ln_binomial_cdf;
use cvqkd_keyrate::stats::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn energy_bound_dominates_binomial_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 400 {
        let k: u64 = rng.gen_range(1..=5000);
        let l: u64 = rng.gen_range(0..=20.min(k));
        let q = 10f64.powf(rng.gen_range(-4.0..(0.2f64).log10()));
        if !((l as f64) / (k as f64) < q) {
            continue;
        }
        let bound = energy_test_log2_epsilon(k as f64, l as f64, q).unwrap() * std::f64::consts::LN_2;
        let exact = ln_binomial_cdf(k, l, q);
        assert!(bound >= exact - 1e-12 * exact.abs().max(1.0), "k={k} l={l} q={q}: {bound} < {exact}");
        if l == 0 {
            assert!((bound - exact).abs() <= 1e-12 * exact.abs().max(1e-300), "l=0 equality k={k} q={q}");
        }
        checked += 1;
    }
}

#[test]
fn energy_epsilon_uses_w_over_r() {
    let a = energy_test_epsilon(1000.0, 2.0, 0.02, 2.0).unwrap();
    let b = energy_test_log2_epsilon(1000.0, 2.0, 0.01).unwrap().exp2();
    assert!((a - b).abs() <= 1e-15 * b);
}

#[test]
fn energy_precondition() {
    assert!(matches!(
        energy_test_log2_epsilon(100.0, 5.0, 0.01),
        Err(cvqkd_keyrate::Error::Precondition(_))
    ));
}

#[test]
fn weight_inverts_epsilon() {
    for &(k, l, r) in &[(2e8, 2.0, 15.0), (1e9, 10.0, 1.3), (5e3, 0.0, 1.0), (1e6, 20.0, 4.0)] {
        let sol = weight_from_epsilon(1e-11, k, l, r).unwrap();
        assert!(!sol.saturated);
        let eps = energy_test_epsilon(k, l, sol.w, r).unwrap();
        assert!(eps <= 1e-11 * (1.0 + 1e-6), "eps {eps} at w {}", sol.w);
        let slightly_less = energy_test_epsilon(k, l, sol.w * (1.0 - 1e-6), r).unwrap();
        assert!(slightly_less > 1e-11 * (1.0 - 1e-4));
    }
}

#[test]
fn weight_saturates_for_tiny_samples() {
    let sol = weight_from_epsilon(1e-11, 10.0, 1.0, 5.0).unwrap();
    assert!(sol.saturated);
    assert_eq!(sol.w, 1.0);
}

#[test]
fn hoeffding_coverage_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (trials, m, x, eps) = (20_000usize, 500usize, 3.0, 0.05);
    let mu_psd = acceptance_mu(x, m as f64, eps, true).unwrap();
    let mu_gen = acceptance_mu(x, m as f64, eps, false).unwrap();
    let (mut exc_psd, mut exc_gen) = (0usize, 0usize);
    for _ in 0..trials {
        let s: f64 = (0..m).map(|_| rng.gen_range(0.0..x)).sum();
        let dev = (s / m as f64 - 0.5 * x).abs();
        exc_psd += (dev > mu_psd) as usize;
        exc_gen += (dev > mu_gen) as usize;
    }
    let allowed = eps + 3.0 * (eps / trials as f64).sqrt();
    assert!((exc_psd as f64 / trials as f64) <= allowed);
    assert!((exc_gen as f64 / trials as f64) <= allowed);
}

#[test]
fn acceptance_radius_formula() {
    let mu = acceptance_mu(2.0, 100.0, 0.1, true).unwrap();
    assert!((mu - (4.0 / 200.0 * 20f64.ln()).sqrt()).abs() < 1e-15);
    let mu = acceptance_mu(2.0, 100.0, 0.1, false).unwrap();
    assert!((mu - (8.0 / 100.0 * 20f64.ln()).sqrt()).abs() < 1e-15);
}

#[test]
fn nonunique_tiers() {
    for (t, cap) in [(1.110, 0.01), (0.832, 0.25), (0.760, 0.5)] {
        let v = nonunique_abort_bound(8, 0.7e-10, t);
        assert!(v < cap, "t_F = {t}: {v}");
    }
}

#[test]
fn completeness_at_matches_closed_form() {
    // Eight observables estimated from m = k p rounds with t = t_F mu(x, m).
    let (k, t_f, eps_at) = (4e9, 0.9, 0.7e-10);
    let tests: Vec<(f64, f64, f64)> = (0..8)
        .map(|j| {
            let x = if j % 2 == 0 { 24.5 } else { 612.5 };
            let m = k / 4.0;
            (m, t_f * acceptance_mu(x, m, eps_at, true).unwrap(), x)
        })
        .collect();
    let c = completeness_bounds(k, 40.0, 1e-10, &tests, 0.0).unwrap();
    let want = nonunique_abort_bound(8, eps_at, t_f);
    assert!((c.eps_c_at - want).abs() <= 1e-9 * want);
}

#[test]
fn completeness_energy_sentinel() {
    let c = completeness_bounds(1e6, 2.0, 1e-3, &[], 0.0).unwrap();
    assert_eq!(c.eps_c_et, None);
    assert_eq!(c.nu_c, 1.0);
    let c = completeness_bounds(1e6, 10.0, 1e-9, &[], 0.0).unwrap();
    assert!(c.eps_c_et.unwrap() < 1e-20);
}

#[test]
fn unique_acceptance_is_vacuous() {
    let c = completeness_bounds(1e9, 10.0, 1e-12, &[(2.5e8, 0.0, 24.5); 8], 0.0).unwrap();
    assert_eq!(c.eps_c_at, 16.0);
    assert_eq!(c.nu_c, 1.0);
}

#[test]
fn delta_w_reference_values() {
    assert_eq!(delta_w(0.0, 4), 0.0);
    let w: f64 = 1e-6;
    let s = w.sqrt();
    let p = s / (1.0 + s);
    let h = -p * p.log2() - (1.0 - p) * (1.0 - p).log2();
    assert!((delta_w(w, 4) - (2.0 * s + (1.0 + s) * h)).abs() < 1e-15);
}

#[test]
fn delta_aep_reference_value() {
    let v = delta_aep(0.7e-10, 3e8, 4);
    let want = 2.0 * 7f64.log2() * ((2.0 / 0.7e-10f64).log2() / 3e8).sqrt();
    assert!((v - want).abs() < 1e-16);
    assert_eq!(delta_aep(0.7e-10, f64::INFINITY, 4), 0.0);
}

#[test]
fn key_length_by_hand() {
    let b = EpsilonBudget::default();
    let inp = KeyLengthInputs {
        h: 1.5,
        n_total: 1e10,
        n_key: 9e9,
        budget: b,
        w: 1e-7,
        leak_per_key_round: 1.3,
        alphabet_size: 4,
    };
    let k = key_length_per_round(&inp);
    let want = 0.9 * (1.5 - delta_aep(b.eps_bar, 9e9, 4) - delta_w(1e-7, 4))
        - 0.9 * 1.3
        - (2.0 / b.eps_ec).log2() / 1e10
        - 2.0 / 1e10 * (1.0 / b.eps_pa).log2();
    assert!((k.raw - want).abs() < 1e-14, "{} vs {want}", k.raw);
    assert_eq!(k.clamped, k.raw.max(0.0));
}

#[test]
fn budget_composition() {
    let b = EpsilonBudget { eps_ec: 1e-3, eps_pa: 4e-3, eps_bar: 1e-3, eps_at: 1e-4, eps_et: 1e-4 };
    assert!((b.total() - (1e-3 + 3e-3)).abs() < 1e-18);
    assert!(EpsilonBudget { eps_ec: 0.0, ..b }.validate().is_err());
}

#[test]
fn r_factor_ideal_limits() {
    let r = r_factor(20, 2.0, DetectorModel::Ideal, GammaConvention::Squared).unwrap();
    assert!(r >= 1.0 && r < 1.0 + 1e-8);
    let lit = r_factor(20, 4.0, DetectorModel::Ideal, GammaConvention::Literal).unwrap();
    let sq = r_factor(20, 2.0, DetectorModel::Ideal, GammaConvention::Squared).unwrap();
    assert_eq!(lit, sq);
    let near = r_factor(20, 4.0, DetectorModel::Trusted { eta_d: 1.0, nu_el: 1e-12 }, GammaConvention::Squared).unwrap();
    let ideal = r_factor(20, 4.0, DetectorModel::Ideal, GammaConvention::Squared).unwrap();
    assert!((near / ideal - 1.0).abs() < 1e-9);
}
