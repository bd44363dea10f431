//! Region operators, bounded observables and the energy-test diagonal.
//!
//! `cargo run --release --example operators`

use cvqkd_keyrate::linalg::{max_eigenvalue, min_eigenvalue};
use cvqkd_keyrate::protocol::{bounded_observable_coeffs, region_operator, v1_diagonal, ProtocolParams};

fn main() -> cvqkd_keyrate::Result<()> {
    let ideal = ProtocolParams::qpsk(0.85, 0.45, 5.0, 8);
    let trusted = ideal.clone().with_trusted_detector(0.72, 0.04);
    for (name, p) in [("ideal", &ideal), ("trusted", &trusted)] {
        for z in 0..4 {
            let r = region_operator(p, z, 12)?;
            let m = r.entries();
            println!("{name} R_{z}: trace {:.5}, eigenvalues in [{:.2e}, {:.4}]", r.trace(), min_eigenvalue(m), max_eigenvalue(m));
        }
    }
    for m_cut in [5.0, 10.0, 20.0] {
        let c = bounded_observable_coeffs(m_cut, 0.72, 0.04)?;
        println!("M={m_cut}: {c:?}");
    }
    let v1 = v1_diagonal(&ideal, 4.0, 16)?;
    println!("V1 diagonal {:?}", v1.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    Ok(())
}
