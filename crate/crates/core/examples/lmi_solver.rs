//! The LMI interior-point solver on a small problem: minimize the largest
//! eigenvalue of a symmetric matrix, `min t  s.t.  t I - M >= 0`, plus an
//! infeasible instance and the JSON exchange format.

use ddd_lqr_lab::conic::{solve, LmiBlock, LmiProblem, SolveSettings};
use ddd_lqr_lab::linalg;
use nalgebra::DMatrix;

fn main() -> ddd_lqr_lab::Result<()> {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let mut p = LmiProblem::new(1);
    p.set_objective(0, 1.0);
    let mut b = LmiBlock::new(3);
    for i in 0..3 {
        b.add_term(0, i, i, 1.0);
        for j in i..3 {
            b.add_constant(i, j, -m[(i, j)]);
        }
    }
    p.add_block(b);

    let r = solve(&p, &SolveSettings::default())?;
    println!("status {}, t = {:.10}, lambda_max = {:.10}", r.status, r.z[0], linalg::max_eigenvalue(&m));
    println!("iterations {}, gap {:.1e}, feas {:.1e}", r.iterations, r.gap, r.feas);

    // x >= 1 and x <= -1 cannot both hold
    let mut q = LmiProblem::new(1);
    let mut b = LmiBlock::new(2);
    b.add_term(0, 0, 0, 1.0);
    b.add_constant(0, 0, -1.0);
    b.add_term(0, 1, 1, -1.0);
    b.add_constant(1, 1, -1.0);
    q.add_block(b);
    println!("infeasible instance: {}", solve(&q, &SolveSettings::default())?.status);

    let json = p.to_json()?;
    let back = LmiProblem::from_json(&json)?;
    println!("JSON round trip keeps {} block(s) of sizes {:?}", back.blocks().len(), back.block_sizes());
    Ok(())
}
