//! Seeded trajectory generation and the data matrices built from it.

use ddd_lqr_lab::linalg;
use ddd_lqr_lab::lti_lab::{read_trajectory_csv, simulate, LtiSystem, NoiseMode};

fn main() -> ddd_lqr_lab::Result<()> {
    let sys = LtiSystem::paper41().with_sigma_w(0.1)?;
    let data = simulate(&sys, 12, 42, NoiseMode::Process)?;
    println!("X0 =\n{:.3}", data.x0);
    println!("U0 =\n{:.3}", data.u0);

    let d = data.combined_matrix();
    println!("D_T is {}x{}, rank {}", d.nrows(), d.ncols(), linalg::numerical_rank(&d));

    // same seed, same numbers
    let again = simulate(&sys, 12, 42, NoiseMode::Process)?;
    assert_eq!(data, again);

    let csv = data.to_csv();
    let back = read_trajectory_csv(&csv)?;
    let (_, _, x1) = back.data_matrices().expect("final state row present");
    println!("CSV round trip max error: {:.1e}", linalg::max_abs(&(&x1 - &data.x1)));

    let noiseless = simulate(&sys.clone().with_sigma_w(0.0)?, 12, 42, NoiseMode::Process)?;
    let dn = noiseless.combined_matrix();
    println!("noiseless D_T rank {} (X1 = A X0 + B U0)", linalg::numerical_rank(&dn));
    Ok(())
}
