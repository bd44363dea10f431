//! Evaluates one operating point and prints the terms of the key length.
//!
//! `cargo run --release --example point -- [n_c]` (default cutoff 6).

use cvqkd_keyrate::scenario::{evaluate_point, ScenarioConfig};

fn main() {
    let mut cfg = ScenarioConfig::default();
    cfg.protocol.n_c = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    cfg.channel.distance_km = 10.0;
    cfg.plan.n_total = 1e10;
    let r = evaluate_point(&cfg);
    println!("status          {}", r.status.as_str());
    println!("solver status   {}", r.solver_status);
    println!("k_T, l_T, n     {:e}, {}, {:e}", r.k_t, r.l_t, r.n_key);
    println!("beta_test, r    {:.4}, {:.4}", r.beta_test, r.r_factor);
    println!("w (exp, eps)    {:.3e} ({:.3e}, {:.3e})", r.w, r.w_exp, r.w_eps);
    println!("H bound         {:.6} (primal {:.6})", r.h_lower_bound, r.primal_value);
    println!("Delta(w), AEP   {:.6}, {:.6}", r.delta_w, r.delta_aep);
    println!("leak per round  {:.6}", r.leak_per_key_round);
    println!("l/N             {:.6e}", r.key_rate);
    println!("nu_c, expected  {}, {:.6e}", r.nu_c, r.expected_rate);
    if !r.message.is_empty() {
        println!("message         {}", r.message);
    }
}
