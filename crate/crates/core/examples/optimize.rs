//! Grid search over amplitude and postselection at one point.
//!
//! `cargo run --release --example optimize`

use cvqkd_keyrate::scenario::{optimization_score, optimize_amplitude_postselection, ScenarioConfig};

fn main() -> cvqkd_keyrate::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.protocol.n_c = 4;
    cfg.plan.asymptotic = true;
    let (best, all) = optimize_amplitude_postselection(&cfg, &[0.7, 0.85, 1.0], &[0.0, 0.45], |_, _| {})?;
    for r in &all {
        println!("alpha={:.2} delta_r={:.2}: {:<14} score={:.5e}", r.alpha, r.delta_r, r.status.as_str(), optimization_score(r));
    }
    println!("best: alpha={} delta_r={} l/N={:.5e}", best.alpha, best.delta_r, best.key_rate);
    Ok(())
}
