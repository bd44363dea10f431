//! Solves one key-rate problem and re-checks its dual certificate.
//!
//! `cargo run --release --example certificate`

use cvqkd_keyrate::linalg::min_eigenvalue;
use cvqkd_keyrate::scenario::{prepare_point, ScenarioConfig};
use cvqkd_keyrate::solver::{dual_slack, dual_value, gradient, perturbed_state, solve_key_rate};

fn main() -> cvqkd_keyrate::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.protocol.n_c = 3;
    cfg.plan.asymptotic = true;
    let prep = prepare_point(&cfg)?;
    let pp = prep.problem.expect("weight not saturated");
    let rep = solve_key_rate(&pp.start, &pp.constraints, &pp.maps, &pp.settings)?;
    println!("status {:?}, {} Frank-Wolfe iterations", rep.status, rep.iterations);
    println!("primal {:.8}, certified {:.8}", rep.primal_value, rep.certified_lower_bound);
    if let Some(cert) = &rep.certificate {
        let rho = perturbed_state(&rep.rho_step1, pp.settings.perturbation);
        let slack = dual_slack(&gradient(&rho, &pp.maps)?, &pp.constraints, &pp.maps, cert);
        println!("slack min eigenvalue {:.3e}", min_eigenvalue(&slack));
        println!("dual value {:.8} (reported {:.8})", dual_value(&pp.constraints, cert), rep.dual_value);
    }
    Ok(())
}
