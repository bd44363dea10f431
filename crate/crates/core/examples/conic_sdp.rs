//! Minimum eigenvalue of a symmetric matrix as a unit-trace SDP.
//!
//! `cargo run --release --example conic_sdp`

use cvqkd_keyrate::conic::{solve, ConicProblem, ConicSettings, ConstraintRow, SparseSym};
use cvqkd_keyrate::linalg::eigvalsh_real;
use nalgebra::DMatrix;

fn main() -> cvqkd_keyrate::Result<()> {
    let c = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let p = ConicProblem {
        block_dims: vec![3],
        lp_dim: 0,
        c_blocks: vec![c.clone()],
        c_lp: vec![],
        rows: vec![ConstraintRow {
            blocks: vec![(0, SparseSym::from_dense(&DMatrix::identity(3, 3)))],
            lp: vec![],
            rhs: 1.0,
        }],
    };
    let sol = solve(&p, &ConicSettings::default())?;
    println!("status {:?}, primal {:.10}, dual {:.10}", sol.status, sol.primal_obj, sol.dual_obj);
    println!("least eigenvalue {:.10}", eigvalsh_real(&c)[0]);
    Ok(())
}
