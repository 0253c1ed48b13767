//! Closed-form predictions for the data-driven programs: the minimum-norm
//! optimizer of the certainty-equivalence program, the gain it must produce,
//! the noise-interaction matrix `Psi`, and the gain bounds of the
//! regularized program.
//!
//! Everything taking `W0` ([`psi_matrix`], [`OracleReport`]) is a
//! simulation-only diagnostic: process noise is never observed on real data.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::excitation;
use crate::linalg;
use crate::lqr_exact;
use crate::lti_lab::{LqrWeights, LtiSystem, TrajectoryData};

/// `E = [I_n; 0_{m x n}; 0_{n x n}]`.
pub fn e_matrix(n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::identity(2 * n + m, n)
}

fn full_row_rank(d: &DMatrix<f64>, what: &'static str) -> Result<usize> {
    let rank = linalg::numerical_rank(d);
    if rank < d.nrows() {
        return Err(Error::RankDeficient {
            what,
            rank,
            required: d.nrows(),
        });
    }
    Ok(rank)
}

/// `Y_n = D' (D D')^{-1} E`, the least-Frobenius-norm solution of `D Y = E`.
/// Computed from a thin QR of `D'` so the error scales with `cond(D)`
/// rather than its square.
pub fn min_norm_solution(d: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if e.nrows() != d.nrows() {
        return Err(Error::dims("E rows", d.nrows(), e.nrows()));
    }
    full_row_rank(d, "combined data matrix D_T")?;
    let qr = d.transpose().qr();
    let z = qr.r().tr_solve_upper_triangular(e).ok_or(Error::RankDeficient {
        what: "combined data matrix D_T",
        rank: linalg::numerical_rank(d),
        required: d.nrows(),
    })?;
    Ok(qr.q() * z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PredictionPath {
    /// `D_T` has full row rank: the optimum forces `U0 Y = 0`.
    ZeroGain,
    /// Noise-free data: least-squares model plus Riccati gain.
    ModelBased,
}

#[derive(Debug, Clone, Serialize)]
pub struct CePrediction {
    #[serde(serialize_with = "crate::report::ser_matrix")]
    pub k: DMatrix<f64>,
    pub path: PredictionPath,
    pub rank_dt: usize,
}

/// `(A_hat, B_hat) = X1 [X0; U0]^+`.
pub fn identify(data: &TrajectoryData) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = data.n();
    let xu = data.state_input();
    full_row_rank(&xu, "[X0; U0]")?;
    let theta = &data.x1 * linalg::pinv(&xu);
    Ok((theta.columns(0, n).into_owned(), theta.columns(n, data.m()).into_owned()))
}

/// The gain the certainty-equivalence program is expected to return.
pub fn ce_prediction(data: &TrajectoryData, weights: &LqrWeights) -> Result<CePrediction> {
    let (n, m) = (data.n(), data.m());
    let rank_dt = linalg::numerical_rank(&data.combined_matrix());
    if rank_dt == 2 * n + m {
        return Ok(CePrediction {
            k: DMatrix::zeros(m, n),
            path: PredictionPath::ZeroGain,
            rank_dt,
        });
    }
    let (a, b) = identify(data)?;
    let model = LtiSystem::new(a, b)?;
    let sol = lqr_exact::solve_dare_default(&model, weights)?;
    Ok(CePrediction {
        k: sol.k,
        path: PredictionPath::ModelBased,
        rank_dt,
    })
}

#[derive(Debug, Clone)]
pub struct PsiMatrices {
    /// `Y (X0 Y)^{-1} Y'`.
    pub m: DMatrix<f64>,
    /// `W0 M W0' - X1 M W0' - W0 M X1'`.
    pub psi: DMatrix<f64>,
}

pub fn psi_matrix(data: &TrajectoryData, y: &DMatrix<f64>) -> Result<PsiMatrices> {
    if y.nrows() != data.horizon {
        return Err(Error::dims("Y rows", data.horizon, y.nrows()));
    }
    let x0y = &data.x0 * y;
    let sv = linalg::singular_values(&x0y);
    let smin = sv.last().copied().unwrap_or(0.0);
    let tol = linalg::rank_tolerance_from(&sv, x0y.nrows(), x0y.ncols());
    if !(smin > tol) {
        return Err(Error::Singular {
            what: "X0 Y",
            sigma_min: smin,
            tolerance: tol,
        });
    }
    let inv_yt = x0y.lu().solve(&y.transpose()).ok_or(Error::Singular {
        what: "X0 Y",
        sigma_min: smin,
        tolerance: tol,
    })?;
    let m = y * inv_yt;
    let w = &data.w0;
    let mwt = &m * w.transpose();
    let psi = w * &mwt - &data.x1 * &mwt - w * &m * data.x1.transpose();
    Ok(PsiMatrices {
        m,
        psi: linalg::symmetrize(&psi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Check {
    pub lambda_max: f64,
    /// Some `eta >= 1` gives `Psi <= (1 - 1/eta) I`.
    pub satisfiable: bool,
    /// `lambda_max` within `1e-12` of one.
    pub borderline: bool,
}

pub fn lemma1_condition(psi: &DMatrix<f64>) -> Lemma1Check {
    let lambda_max = linalg::max_eigenvalue(psi);
    Lemma1Check {
        lambda_max,
        satisfiable: lambda_max < 1.0,
        borderline: (lambda_max - 1.0).abs() <= 1e-12,
    }
}

/// Deterministic bound on `||K_rp||^2` from the realized data:
/// `(eta d / (s_R s_D)) (trace(Q)/s_Q + eta d / (s_Q s_D))` with
/// `d = 2n+m`, `s_D = sigma_min(D_T D_T')`.
pub fn rp_gain_bound(data: &TrajectoryData, weights: &LqrWeights, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    let d = data.combined_matrix();
    full_row_rank(&d, "combined data matrix D_T")?;
    let dim = d.nrows() as f64;
    let s_d = linalg::min_eigenvalue(&(&d * d.transpose()));
    let s_q = linalg::min_eigenvalue(weights.q());
    let s_r = linalg::min_eigenvalue(weights.r());
    Ok(eta * dim / (s_r * s_d) * (weights.q().trace() / s_q + eta * dim / (s_q * s_d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalBound {
    pub bound: f64,
    /// `2(n+1)(2n+m) eta / (min(s_R, s_Q) sigma_min(P2)^2 rho^2 sigma_u^2)`.
    pub c: f64,
    pub sigma_min_p2: f64,
}

/// `(C/(T-n)) (trace(Q)/s_Q + C/(T-n))`, holding with probability `1 - eps_T`.
pub fn rp_bound_theoretical(
    system: &LtiSystem,
    weights: &LqrWeights,
    t: usize,
    eta: f64,
    rho: f64,
) -> Result<TheoreticalBound> {
    let (n, m) = (system.n(), system.m());
    if t <= n {
        return Err(Error::param("T", format!("needs T > n = {n}, got {t}")));
    }
    if !(rho > 0.0) {
        return Err(Error::param("rho", format!("must be > 0, got {rho}")));
    }
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    let sp2 = linalg::sigma_min(&excitation::p2_matrix(system)?);
    let s_q = linalg::min_eigenvalue(weights.q());
    let s_r = linalg::min_eigenvalue(weights.r());
    let c = 2.0 * (n + 1) as f64 * (2 * n + m) as f64 * eta
        / (s_r.min(s_q) * sp2.powi(2) * rho.powi(2) * system.sigma_u.powi(2));
    let lead = c / (t - n) as f64;
    Ok(TheoreticalBound {
        bound: lead * (weights.q().trace() / s_q + lead),
        c,
        sigma_min_p2: sp2,
    })
}

/// Optimal value of the certainty-equivalence program on noisy data.
pub fn ce_objective_reference(weights: &LqrWeights) -> f64 {
    weights.q().trace()
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    #[serde(serialize_with = "crate::report::ser_opt_matrix")]
    pub y_n: Option<DMatrix<f64>>,
    pub rank_dt: usize,
    #[serde(serialize_with = "crate::report::ser_opt_matrix")]
    pub k_predicted: Option<DMatrix<f64>>,
    pub prediction_path: Option<PredictionPath>,
    #[serde(serialize_with = "crate::report::ser_opt_matrix")]
    pub psi: Option<DMatrix<f64>>,
    /// `||Psi - A A'||_F`.
    pub psi_gap: Option<f64>,
    pub lemma1_lambda_max: Option<f64>,
    pub rp_bound: Option<f64>,
    pub rp_bound_theoretical: Option<f64>,
}

impl OracleReport {
    /// Collects every prediction that applies to this data set. `y_ce` is the
    /// solver's CE optimizer (for `Psi`), `eta` and `rho` feed the RP bounds.
    pub fn new(
        system: &LtiSystem,
        weights: &LqrWeights,
        data: &TrajectoryData,
        y_ce: Option<&DMatrix<f64>>,
        eta: Option<f64>,
        rho: Option<f64>,
    ) -> Self {
        let (n, m) = (data.n(), data.m());
        let d = data.combined_matrix();
        let pred = ce_prediction(data, weights).ok();
        let psi = y_ce.and_then(|y| psi_matrix(data, y).ok()).map(|p| p.psi);
        let aat = system.a() * system.a().transpose();
        Self {
            y_n: min_norm_solution(&d, &e_matrix(n, m)).ok(),
            rank_dt: linalg::numerical_rank(&d),
            k_predicted: pred.as_ref().map(|p| p.k.clone()),
            prediction_path: pred.map(|p| p.path),
            psi_gap: psi.as_ref().map(|p| (p - &aat).norm()),
            lemma1_lambda_max: psi.as_ref().map(|p| lemma1_condition(p).lambda_max),
            psi,
            rp_bound: eta.and_then(|e| rp_gain_bound(data, weights, e).ok()),
            rp_bound_theoretical: match (eta, rho) {
                (Some(e), Some(r)) => rp_bound_theoretical(system, weights, data.horizon, e, r)
                    .ok()
                    .map(|b| b.bound),
                _ => None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_data_gives_e() {
        let e = e_matrix(1, 1);
        let y = min_norm_solution(&DMatrix::identity(3, 3), &e).unwrap();
        assert!(linalg::max_abs(&(y - e)) < 1e-15);
    }

    #[test]
    fn rank_deficient_data_is_named() {
        let d = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0, 0.0, 1.0, 0.0, 1.0]);
        match min_norm_solution(&d, &e_matrix(1, 1)) {
            Err(Error::RankDeficient { rank, required, .. }) => assert_eq!((rank, required), (2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lemma1_cases() {
        assert!(lemma1_condition(&DMatrix::zeros(2, 2)).satisfiable);
        let c = lemma1_condition(&DMatrix::identity(2, 2));
        assert!(!c.satisfiable && c.borderline);
    }

    #[test]
    fn theoretical_bound_scaling() {
        let sys = LtiSystem::paper41().with_sigma_w(1.0).unwrap();
        let w = LqrWeights::paper();
        let b1 = rp_bound_theoretical(&sys, &w, 1002, 1.0, 0.5).unwrap();
        let lead = b1.c / 1000.0;
        assert!((b1.bound - lead * (2.0 + lead)).abs() < 1e-12 * b1.bound);
        // the quadratic term dies out, leaving 1/T decay
        let far = |t| rp_bound_theoretical(&sys, &w, t, 1.0, 0.5).unwrap().bound;
        assert!((far(100_000_002) / far(200_000_002) - 2.0).abs() < 1e-3);
        let b3 = rp_bound_theoretical(&sys, &w, 1002, 3.0, 0.5).unwrap();
        assert!((b3.c / b1.c - 3.0).abs() < 1e-12);
        assert!(rp_bound_theoretical(&sys, &w, 2, 1.0, 0.5).is_err());
    }
}
