//! Hankel matrices, persistency of excitation, the fundamental-lemma rank
//! test and the high-probability singular value bound.

use ddd_lqr_lab::excitation::{self, LogBase};
use ddd_lqr_lab::lti_lab::{simulate, InputScaling, LtiSystem, NoiseMode};
use ddd_lqr_lab::linalg;

fn main() -> ddd_lqr_lab::Result<()> {
    let sys = LtiSystem::paper41().with_sigma_w(1.0)?;
    let (n, m) = (sys.n(), sys.m());
    let t_min = (m + n) * (n + 1) + n;
    let data = simulate(&sys, t_min, 3, NoiseMode::Process)?;

    let v0 = data.stacked_input(InputScaling::Plain)?;
    let pe = excitation::pe_check(&v0, n + 1);
    println!("T = {t_min}: [U0; W0] PE of order {}: {} (rank {}/{})", n + 1, pe.is_pe, pe.hankel_rank, pe.required_rank);
    let fr = excitation::fundamental_rank_check(&data.x0, &v0)?;
    println!("rank [X0; U0; W0] = {} of {}", fr.rank, fr.required_rank);

    let t = 200;
    let long = simulate(&sys, t, 5, NoiseMode::Process)?;
    let z0 = long.stacked_input(InputScaling::Isotropic)?;
    let h = excitation::hankel(&z0, n + 1)?;
    let bound = excitation::hankel_sv_bound(t, n, 1.0)?;
    println!("T = {t}: sigma_min(H) = {:.3}, bound sqrt(T-n)/sqrt(2) = {bound:.3}", linalg::sigma_min(&h));
    println!(
        "ln eps_T = {:.3e}, horizon threshold {:.1}",
        excitation::ln_epsilon_t(m, n, t, LogBase::Natural),
        excitation::lambda_threshold(m, n, t, LogBase::Natural)
    );
    println!("empirical rho = {:.4}", excitation::empirical_rho(&long.x0, &z0)?);
    Ok(())
}
