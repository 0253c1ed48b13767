//! Closed-form predictions that need no solver: the minimum-norm CE point,
//! identified model, gain bounds and the full oracle report.

use ddd_lqr_lab::analytic_oracle::{
    ce_objective_reference, e_matrix, identify, min_norm_solution, rp_bound_theoretical, OracleReport,
};
use ddd_lqr_lab::ddd_sdp::reduced_objective_ce;
use ddd_lqr_lab::excitation;
use ddd_lqr_lab::lti_lab::{simulate, InputScaling, LqrWeights, LtiSystem, NoiseMode};

fn main() -> ddd_lqr_lab::Result<()> {
    let sys = LtiSystem::paper41().with_sigma_w(1.0)?;
    let w = LqrWeights::paper();
    let data = simulate(&sys, 100, 4, NoiseMode::Process)?;
    let (n, m) = (data.n(), data.m());

    let yn = min_norm_solution(&data.combined_matrix(), &e_matrix(n, m))?;
    println!("O_ce(Y_n) = {:.12}, trace(Q) = {}", reduced_objective_ce(&data, &w, &yn)?, ce_objective_reference(&w));

    let (a_hat, b_hat) = identify(&data)?;
    println!("least-squares model:\nA_hat = {a_hat:.4}B_hat = {b_hat:.4}");

    let z0 = data.stacked_input(InputScaling::Isotropic)?;
    let rho = excitation::empirical_rho(&data.x0, &z0)?;
    let th = rp_bound_theoretical(&sys, &w, data.horizon, 1.0, rho)?;
    println!("theoretical RP bound at T = 100 (rho = {rho:.3}): {:.3e}", th.bound);

    let report = OracleReport::new(&sys, &w, &data, None, Some(1.0), Some(rho));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
