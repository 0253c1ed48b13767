//! Robustness-promoting program: epigraph and full slack forms agree, and
//! the solved gain respects the data-dependent bound.

use ddd_lqr_lab::analytic_oracle::rp_gain_bound;
use ddd_lqr_lab::conic::SolveSettings;
use ddd_lqr_lab::ddd_sdp::{solve_rp, RpForm};
use ddd_lqr_lab::lti_lab::{simulate, LqrWeights, LtiSystem, NoiseMode};

fn main() -> ddd_lqr_lab::Result<()> {
    let w = LqrWeights::paper();
    let s = SolveSettings::default();
    let data = simulate(&LtiSystem::paper41().with_sigma_w(1.0)?, 25, 9, NoiseMode::Process)?;
    for eta in [1.0, 10.0, 250.0] {
        let epi = solve_rp(&data, &w, eta, RpForm::Epigraph, &s)?;
        let full = solve_rp(&data, &w, eta, RpForm::Full, &s)?;
        let nk = epi.norm_k();
        println!("eta = {eta}");
        println!("  epigraph: {} obj {:.8} ({} vars)", epi.status, epi.objective, epi.solver.num_vars);
        println!("  full:     {} obj {:.8} ({} vars)", full.status, full.objective, full.solver.num_vars);
        println!("  ||K||^2 = {:.4e} <= bound {:.4e}", nk * nk, rp_gain_bound(&data, &w, eta)?);
        println!("  ||X0 Y - I|| = {:.4}, ||U0 Y|| = {:.4}", epi.diagnostics.norm_x0y_minus_i, epi.diagnostics.norm_u0y);
    }
    Ok(())
}
