//! Single-run commands behind the command-line tool. Each returns a JSON
//! report; the binary only parses arguments and prints.

use nalgebra::DMatrix;
use serde_json::{json, Value};

use super::ExperimentConfig;
use crate::analytic_oracle::OracleReport;
use crate::ddd_sdp::{self, RpForm};
use crate::error::Result;
use crate::excitation;
use crate::linalg;
use crate::lqr_exact;
use crate::lti_lab::{read_trajectory_csv, simulate, TrajectoryData};

/// Horizon and seed of a single-run command.
#[derive(Debug, Clone, Copy)]
pub struct RunSpec {
    pub horizon: usize,
    pub seed: u64,
}

impl RunSpec {
    /// `horizon` defaults to the first grid point, `seed` to `base_seed`.
    pub fn from_config(config: &ExperimentConfig, horizon: Option<usize>, seed: Option<u64>) -> Self {
        Self {
            horizon: horizon.unwrap_or(config.t_grid[0]),
            seed: seed.unwrap_or(config.base_seed),
        }
    }
}

fn data(config: &ExperimentConfig, run: RunSpec) -> Result<TrajectoryData> {
    simulate(&config.system(config.sigma_w)?, run.horizon, run.seed, config.noise_mode)
}

/// Riccati solution, gain and spectral radii of the configured plant.
pub fn dare(config: &ExperimentConfig) -> Result<Value> {
    let system = config.system(0.0)?;
    let sol = lqr_exact::solve_dare_default(&system, &config.weights()?)?;
    let (_, rho_cl) = lqr_exact::is_stabilizing(&system, &sol.k)?;
    Ok(json!({
        "system": config.system_label,
        "open_loop_rho": linalg::spectral_radius(system.a()),
        "closed_loop_rho": rho_cl,
        "dare": sol,
    }))
}

/// Trajectory as CSV text (`t, x, u, w` columns).
pub fn simulate_csv(config: &ExperimentConfig, run: RunSpec) -> Result<String> {
    Ok(data(config, run)?.to_csv())
}

pub fn solve_ce(config: &ExperimentConfig, run: RunSpec) -> Result<Value> {
    let d = data(config, run)?;
    let weights = config.weights()?;
    let sol = ddd_sdp::solve_ce(&d, &weights, &config.solver)?;
    let oracle = OracleReport::new(&config.system(config.sigma_w)?, &weights, &d, Some(&sol.y), None, None);
    Ok(json!({
        "horizon": run.horizon,
        "seed": run.seed,
        "sigma_w": config.sigma_w,
        "solution": sol,
        "oracle": oracle,
    }))
}

pub fn solve_rp(config: &ExperimentConfig, run: RunSpec, eta: f64, form: RpForm) -> Result<Value> {
    let d = data(config, run)?;
    let weights = config.weights()?;
    let sol = ddd_sdp::solve_rp(&d, &weights, eta, form, &config.solver)?;
    let oracle = OracleReport::new(&config.system(config.sigma_w)?, &weights, &d, None, Some(eta), None);
    let nk = sol.norm_k();
    Ok(json!({
        "horizon": run.horizon,
        "seed": run.seed,
        "sigma_w": config.sigma_w,
        "eta": eta,
        "solution": sol,
        "norm_K_squared": nk * nk,
        "oracle": oracle,
    }))
}

/// Excitation of the input alone, of the input stacked with the noise, and
/// the rank of `D_T`. `depth` defaults to `n + 1`.
pub fn check_pe(config: &ExperimentConfig, run: RunSpec, depth: Option<usize>) -> Result<Value> {
    let d = data(config, run)?;
    let mut out = pe_report(&d.x0, &d.u0, &d.w0, Some(&d.x1), depth)?;
    out["horizon"] = json!(run.horizon);
    out["seed"] = json!(run.seed);
    Ok(out)
}

/// [`check_pe`] on a trajectory CSV. The rank of `D_T` needs the final
/// state row; noise columns that are all zero are treated as absent.
pub fn check_pe_csv(text: &str, depth: Option<usize>) -> Result<Value> {
    let traj = read_trajectory_csv(text)?;
    let t = traj.u.ncols();
    let x0 = traj.x.columns(0, t.min(traj.x.ncols())).into_owned();
    let x1 = traj.data_matrices().map(|(_, _, x1)| x1);
    let mut out = pe_report(&x0, &traj.u, &traj.w, x1.as_ref(), depth)?;
    out["horizon"] = json!(t);
    Ok(out)
}

fn pe_report(
    x0: &DMatrix<f64>,
    u0: &DMatrix<f64>,
    w0: &DMatrix<f64>,
    x1: Option<&DMatrix<f64>>,
    depth: Option<usize>,
) -> Result<Value> {
    let n = x0.nrows();
    let depth = depth.unwrap_or(n + 1);
    let mut out = json!({
        "depth": depth,
        "input_pe": excitation::pe_check(u0, depth),
    });
    if let Some(x1) = x1 {
        let d = linalg::vstack(&[x0, u0, x1]);
        out["rank_DT"] = json!(linalg::numerical_rank(&d));
        out["required_rank_DT"] = json!(d.nrows());
        out["sigma_min_DT"] = json!(linalg::sigma_min(&d));
    }
    if w0.iter().any(|v| *v != 0.0) {
        let v0 = linalg::vstack(&[u0, w0]);
        out["stacked_pe"] = serde_json::to_value(excitation::pe_check(&v0, depth))?;
        out["fundamental_rank"] = serde_json::to_value(excitation::fundamental_rank_check(x0, &v0)?)?;
    }
    Ok(out)
}
