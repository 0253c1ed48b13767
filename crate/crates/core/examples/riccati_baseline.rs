//! Model-based reference: Riccati solution, LQR gain and closed-loop cost
//! for the benchmark plant, with the literal printed B for comparison.

use ddd_lqr_lab::linalg;
use ddd_lqr_lab::lqr_exact::{average_cost, is_stabilizing, solve_dare_default};
use ddd_lqr_lab::lti_lab::{LqrWeights, LtiSystem};

fn main() -> ddd_lqr_lab::Result<()> {
    let w = LqrWeights::paper();
    for (name, sys) in [("paper41", LtiSystem::paper41()), ("paper41-printed", LtiSystem::paper41_printed())] {
        let dare = solve_dare_default(&sys, &w)?;
        let (stable, rho) = is_stabilizing(&sys, &dare.k)?;
        println!("{name}");
        println!("  rho(A)        = {:.5}", linalg::spectral_radius(sys.a()));
        println!("  K             = {:.5}", dare.k);
        println!("  rho(A - BK)   = {rho:.5} (stable: {stable})");
        println!("  trace(P)      = {:.5}", dare.p.trace());
        println!("  average cost at sigma_w = 1: {:.5}", average_cost(&sys.clone().with_sigma_w(1.0)?, &w, &dare.k)?);
        println!("  iterations    = {}, residual {:.1e}", dare.iterations, dare.residual);
    }
    Ok(())
}
