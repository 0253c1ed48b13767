//! Certainty-equivalence program on clean and on slightly noisy data, next
//! to the closed-form prediction of its optimum.

use ddd_lqr_lab::analytic_oracle::{ce_prediction, lemma1_condition, psi_matrix};
use ddd_lqr_lab::conic::SolveSettings;
use ddd_lqr_lab::ddd_sdp::{solve_ce, verify_feasibility};
use ddd_lqr_lab::lqr_exact::{is_stabilizing, solve_dare_default};
use ddd_lqr_lab::lti_lab::{simulate, LqrWeights, LtiSystem, NoiseMode};

fn main() -> ddd_lqr_lab::Result<()> {
    let w = LqrWeights::paper();
    let k_lqr = solve_dare_default(&LtiSystem::paper41(), &w)?.k;
    println!("K_lqr = {k_lqr:.5}");

    for sigma_w in [0.0, 1e-5f64.sqrt()] {
        let sys = LtiSystem::paper41().with_sigma_w(sigma_w)?;
        let data = simulate(&sys, 50, 1, NoiseMode::Process)?;
        let sol = solve_ce(&data, &w, &SolveSettings::default())?;
        let k = sol.k.clone().expect("X0 Y is invertible at a CE optimum");
        let pred = ce_prediction(&data, &w)?;
        let (_, rho) = is_stabilizing(&sys, &k)?;
        let feas = verify_feasibility(&data, &w, &sol.y, &sol.x, None, 1e-7)?;
        println!("sigma_w = {sigma_w:.2e}: {} in {} iterations", sol.status, sol.solver.iterations);
        println!("  K_ce = {k:.5}  predicted ({:?}) {:.5}", pred.path, pred.k);
        println!("  objective {:.8}, rho(A - B K_ce) = {rho:.4}, worst LMI eigenvalue {:.1e}", sol.objective, feas.worst);
        if sigma_w > 0.0 {
            let psi = psi_matrix(&data, &sol.y)?;
            let l1 = lemma1_condition(&psi.psi);
            println!("  Psi =\n{:.4}  lambda_max = {:.4}, satisfiable: {}", psi.psi, l1.lambda_max, l1.satisfiable);
        }
    }
    Ok(())
}
