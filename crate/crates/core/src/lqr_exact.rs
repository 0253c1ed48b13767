//! Model-based LQR: Riccati fixed point, optimal gain and closed-loop cost.
//!
//! Sign convention everywhere in the crate: `u = -K x`, closed loop `A - B K`,
//! `K = (R + B'PB)^{-1} B'PA`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti_lab::{LqrWeights, LtiSystem};

pub const DEFAULT_DARE_TOL: f64 = 1e-10;
pub const DEFAULT_DARE_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct DareSolution {
    #[serde(serialize_with = "crate::report::ser_matrix")]
    pub p: DMatrix<f64>,
    #[serde(serialize_with = "crate::report::ser_matrix")]
    pub k: DMatrix<f64>,
    /// `||Ric(P) - P||_F / max(1, ||P||_F)` at the returned `P`.
    pub residual: f64,
    pub iterations: usize,
}

/// One application of the Riccati map together with the gain it implies.
fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bt_p = b.transpose() * p;
    let gram = r + &bt_p * b;
    let k = linalg::spd_solve(&gram, &(&bt_p * a), "R + B'PB")?;
    let at_p = a.transpose() * p;
    let next = &at_p * a - (&at_p * b) * &k + q;
    Ok((linalg::symmetrize(&next), k))
}

fn relative_residual(next: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    (next - p).norm() / next.norm().max(1.0)
}

/// Fixed-point Riccati iteration `P <- Ric(P)` started at `P = Q`.
pub fn solve_dare(system: &LtiSystem, weights: &LqrWeights, tol: f64, max_iter: usize) -> Result<DareSolution> {
    weights.check_dims(system)?;
    let (a, b, q, r) = (system.a(), system.b(), weights.q(), weights.r());

    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let (next, _) = riccati_step(a, b, q, r, &p)?;
        residual = relative_residual(&next, &p);
        if !residual.is_finite() {
            break;
        }
        p = next;
        if residual <= tol {
            let (check, k) = riccati_step(a, b, q, r, &p)?;
            return Ok(DareSolution {
                residual: relative_residual(&check, &p),
                p,
                k,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

pub fn solve_dare_default(system: &LtiSystem, weights: &LqrWeights) -> Result<DareSolution> {
    solve_dare(system, weights, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITER)
}

fn check_gain(system: &LtiSystem, k: &DMatrix<f64>) -> Result<()> {
    if k.nrows() != system.m() || k.ncols() != system.n() {
        return Err(Error::dims(
            "gain K",
            format!("{}x{}", system.m(), system.n()),
            format!("{}x{}", k.nrows(), k.ncols()),
        ));
    }
    Ok(())
}

/// `A - B K`.
pub fn closed_loop(system: &LtiSystem, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_gain(system, k)?;
    Ok(system.a() - system.b() * k)
}

/// Whether `u = -Kx` stabilizes the plant, with the closed-loop spectral radius.
pub fn is_stabilizing(system: &LtiSystem, k: &DMatrix<f64>) -> Result<(bool, f64)> {
    let rho = linalg::spectral_radius(&closed_loop(system, k)?);
    Ok((rho < 1.0, rho))
}

/// Solves `P = F' P F + M` through the Kronecker form.
pub fn solve_discrete_lyapunov(f: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let ft = f.transpose();
    // vec(F' P F) = (F' (x) F') vec(P) in column-major vec
    let kron = ft.kronecker(&ft);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = nalgebra::DVector::from_column_slice(m.as_slice());
    let sol = lhs.lu().solve(&rhs).ok_or(Error::Singular {
        what: "Lyapunov operator",
        sigma_min: 0.0,
        tolerance: 0.0,
    })?;
    Ok(linalg::symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// Steady-state average cost `sigma_w^2 trace(P_cl)` of `u = -Kx`, or `+inf`
/// when the closed loop is not Schur stable.
pub fn average_cost(system: &LtiSystem, weights: &LqrWeights, k: &DMatrix<f64>) -> Result<f64> {
    weights.check_dims(system)?;
    let f = closed_loop(system, k)?;
    if linalg::spectral_radius(&f) >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let m = weights.q() + k.transpose() * weights.r() * k;
    let p_cl = solve_discrete_lyapunov(&f, &m)?;
    Ok(system.sigma_w.powi(2) * p_cl.trace())
}
