//! Hankel matrices, persistency of excitation and the singular-value bounds
//! that make the combined data matrix grow like `sqrt(T)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti_lab::LtiSystem;

/// Depth-`k` block Hankel matrix of the columns of `f` (size `ks x (T-k+1)`).
pub fn hankel(f: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let (s, t) = f.shape();
    if k == 0 || k > t {
        return Err(Error::param("k", format!("depth must be in 1..={t}, got {k}")));
    }
    let cols = t - k + 1;
    let mut h = DMatrix::zeros(k * s, cols);
    for i in 0..k {
        h.view_mut((i * s, 0), (s, cols)).copy_from(&f.columns(i, cols));
    }
    Ok(h)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PeReport {
    pub order: usize,
    pub hankel_rank: usize,
    pub required_rank: usize,
    pub min_singular_value: f64,
    pub rank_tolerance: f64,
    pub is_pe: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Persistency of excitation of order `k`: the depth-`k` Hankel matrix has
/// full row rank `k s`.
pub fn pe_check(f: &DMatrix<f64>, k: usize) -> PeReport {
    let (s, t) = f.shape();
    let required_rank = k * s;
    let h = match hankel(f, k) {
        Ok(h) => h,
        Err(e) => {
            return PeReport {
                order: k,
                hankel_rank: 0,
                required_rank,
                min_singular_value: 0.0,
                rank_tolerance: 0.0,
                is_pe: false,
                reason: Some(e.to_string()),
            }
        }
    };
    let sv = linalg::singular_values(&h);
    let tol = linalg::rank_tolerance_from(&sv, h.nrows(), h.ncols());
    let hankel_rank = sv.iter().filter(|&&v| v > tol).count();
    let min_singular_value = if h.ncols() >= h.nrows() {
        sv.last().copied().unwrap_or(0.0)
    } else {
        0.0
    };
    let too_short = t + 1 < k + required_rank;
    PeReport {
        order: k,
        hankel_rank,
        required_rank,
        min_singular_value,
        rank_tolerance: tol,
        is_pe: hankel_rank == required_rank,
        reason: too_short.then(|| {
            format!(
                "T - k + 1 = {} columns cannot reach rank k s = {required_rank}",
                t + 1 - k
            )
        }),
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FundamentalRankCheck {
    pub holds: bool,
    pub rank: usize,
    pub required_rank: usize,
    /// `false` when the stacked input is not persistently exciting of order
    /// `n + 1`, in which case `holds` is not guaranteed by the fundamental lemma.
    pub input_pe: bool,
}

impl FundamentalRankCheck {
    pub fn inconclusive(&self) -> bool {
        !self.input_pe
    }
}

/// Rank test of `[X0; V0]` against `2n + m`, where `V0` stacks `m + n` input
/// channels (inputs plus noise treated as inputs).
pub fn fundamental_rank_check(x0: &DMatrix<f64>, v0: &DMatrix<f64>) -> Result<FundamentalRankCheck> {
    if x0.ncols() != v0.ncols() {
        return Err(Error::dims("[X0; V0] columns", x0.ncols(), v0.ncols()));
    }
    let n = x0.nrows();
    let required_rank = n + v0.nrows();
    let input_pe = pe_check(v0, n + 1).is_pe;
    if x0.ncols() < required_rank {
        return Ok(FundamentalRankCheck {
            holds: false,
            rank: linalg::numerical_rank(&linalg::vstack(&[x0, v0])),
            required_rank,
            input_pe,
        });
    }
    let rank = linalg::numerical_rank(&linalg::vstack(&[x0, v0]));
    Ok(FundamentalRankCheck {
        holds: rank == required_rank,
        rank,
        required_rank,
        input_pe,
    })
}

/// Base of the logarithms in the horizon threshold and failure probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

/// `(n+1)(m+n) log^2(2(n+1)(m+n)) log^2(2T(m+n))`
pub fn lambda_threshold(m: usize, n: usize, t: usize, base: LogBase) -> f64 {
    let (m, n, t) = (m as f64, n as f64, t as f64);
    let l1 = base.log(2.0 * (n + 1.0) * (m + n));
    let l2 = base.log(2.0 * t * (m + n));
    (n + 1.0) * (m + n) * l1 * l1 * l2 * l2
}

/// Natural log of the failure probability
/// `(2T(m+n))^(-log^2(2(n+1)(m+n)) log(2T(m+n)))`.
///
/// The probability itself underflows `f64` already at moderate horizons, so
/// comparisons should be made on this value.
pub fn ln_epsilon_t(m: usize, n: usize, t: usize, base: LogBase) -> f64 {
    let (mf, nf, tf) = (m as f64, n as f64, t as f64);
    let arg = 2.0 * tf * (mf + nf);
    let l1 = base.log(2.0 * (nf + 1.0) * (mf + nf));
    -(l1 * l1) * base.log(arg) * arg.ln()
}

pub fn epsilon_t(m: usize, n: usize, t: usize, base: LogBase) -> f64 {
    ln_epsilon_t(m, n, t, base).exp()
}

/// High-probability lower bound `sqrt(T-n) sigma_z / sqrt(2)` on
/// `sigma_min(H_{n+1}(Z0))` for i.i.d. `N(0, sigma_z^2 I)` input.
pub fn hankel_sv_bound(t: usize, n: usize, sigma_z: f64) -> Result<f64> {
    if t <= n {
        return Err(Error::param("T", format!("needs T > n = {n}, got {t}")));
    }
    Ok(((t - n) as f64).sqrt() * sigma_z / 2f64.sqrt())
}

/// `sigma_min([X0; Z0]) sqrt(n+1) / sigma_min(H_{n+1}(Z0))`, an empirical
/// lower estimate of the quantitative fundamental-lemma constant.
pub fn empirical_rho(x0: &DMatrix<f64>, z0: &DMatrix<f64>) -> Result<f64> {
    if x0.ncols() != z0.ncols() {
        return Err(Error::dims("[X0; Z0] columns", x0.ncols(), z0.ncols()));
    }
    let n = x0.nrows();
    let h = hankel(z0, n + 1)?;
    if h.ncols() < h.nrows() {
        return Err(Error::RankDeficient {
            what: "Hankel matrix of Z0",
            rank: h.ncols(),
            required: h.nrows(),
        });
    }
    let sv = linalg::singular_values(&h);
    let tol = linalg::rank_tolerance_from(&sv, h.nrows(), h.ncols());
    let hmin = sv.last().copied().unwrap_or(0.0);
    if hmin <= tol {
        return Err(Error::Singular {
            what: "Hankel matrix of Z0",
            sigma_min: hmin,
            tolerance: tol,
        });
    }
    let stacked = linalg::vstack(&[x0, z0]);
    Ok(linalg::sigma_min(&stacked) * ((n + 1) as f64).sqrt() / hmin)
}

/// `[[I, 0, 0], [0, I, 0], [A, B, (sigma_w/sigma_u) I]]`, mapping
/// `[X0; U0; (sigma_u/sigma_w) W0]` to the combined data matrix.
pub fn p2_matrix(system: &LtiSystem) -> Result<DMatrix<f64>> {
    if !(system.sigma_w > 0.0) {
        return Err(Error::param("sigma_w", "needs sigma_w > 0"));
    }
    let (n, m) = (system.n(), system.m());
    let mut p = DMatrix::zeros(2 * n + m, 2 * n + m);
    p.view_mut((0, 0), (n + m, n + m)).fill_with_identity();
    p.view_mut((n + m, 0), (n, n)).copy_from(system.a());
    p.view_mut((n + m, n), (n, m)).copy_from(system.b());
    let ratio = system.sigma_w / system.sigma_u;
    for i in 0..n {
        p[(n + m + i, n + m + i)] = ratio;
    }
    Ok(p)
}

/// `[[I, 0, 0], [0, I, 0], [A, B, I]]`, mapping `[X0; U0; W0]` to the
/// combined data matrix.
pub fn p1_matrix(system: &LtiSystem) -> DMatrix<f64> {
    let (n, m) = (system.n(), system.m());
    let mut p = DMatrix::identity(2 * n + m, 2 * n + m);
    p.view_mut((n + m, 0), (n, n)).copy_from(system.a());
    p.view_mut((n + m, n), (n, m)).copy_from(system.b());
    p
}

/// Lower bound on `sigma_min(D_T)`; returns `(bound, sigma_min(P2))`.
pub fn combined_sv_bound(system: &LtiSystem, t: usize, rho: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0) {
        return Err(Error::param("rho", format!("must be > 0, got {rho}")));
    }
    let n = system.n();
    if t <= n {
        return Err(Error::param("T", format!("needs T > n = {n}, got {t}")));
    }
    let sp2 = linalg::sigma_min(&p2_matrix(system)?);
    let bound = sp2 * ((t - n) as f64).sqrt() * rho * system.sigma_u / (2.0 * (n + 1) as f64).sqrt();
    Ok((bound, sp2))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoundReport {
    pub lambda_value: f64,
    /// `c * lambda_value`, the horizon the probabilistic bounds ask for.
    pub required_horizon: f64,
    pub horizon: usize,
    pub constant_c: f64,
    pub epsilon_t: f64,
    pub ln_epsilon_t: f64,
    pub hankel_bound: f64,
    pub combined_bound: f64,
    pub sigma_min_p2: f64,
    pub rho_used: f64,
}

impl BoundReport {
    pub fn new(system: &LtiSystem, t: usize, rho: f64, constant_c: f64, base: LogBase) -> Result<Self> {
        let (n, m) = (system.n(), system.m());
        let lambda_value = lambda_threshold(m, n, t, base);
        let (combined_bound, sigma_min_p2) = combined_sv_bound(system, t, rho)?;
        let ln_eps = ln_epsilon_t(m, n, t, base);
        Ok(Self {
            lambda_value,
            required_horizon: constant_c * lambda_value,
            horizon: t,
            constant_c,
            epsilon_t: ln_eps.exp(),
            ln_epsilon_t: ln_eps,
            hankel_bound: hankel_sv_bound(t, n, system.sigma_u)?,
            combined_bound,
            sigma_min_p2,
            rho_used: rho,
        })
    }

    pub fn horizon_admissible(&self) -> bool {
        self.horizon as f64 >= self.required_horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hankel_small_cases() {
        let f = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            hankel(&f, 2).unwrap(),
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0])
        );
        assert_eq!(hankel(&f, 1).unwrap(), f);
        assert!(hankel(&f, 0).is_err());
        assert!(hankel(&f, 5).is_err());
    }

    #[test]
    fn hankel_index_arithmetic() {
        let f = DMatrix::from_fn(2, 5, |i, j| (10 * i + j) as f64);
        let h = hankel(&f, 3).unwrap();
        assert_eq!(h.shape(), (6, 3));
        for blk in 0..3 {
            for j in 0..3 {
                for r in 0..2 {
                    assert_eq!(h[(blk * 2 + r, j)], f[(r, blk + j)]);
                }
            }
        }
    }

    #[test]
    fn pe_examples() {
        let constant = DMatrix::from_row_slice(1, 4, &[1.0, 1.0, 1.0, 1.0]);
        let r = pe_check(&constant, 2);
        assert!(!r.is_pe);
        assert_eq!(r.hankel_rank, 1);

        // impulses whose depth-2 Hankel is a permutation of the identity
        let f = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let h = hankel(&f, 2).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let r = pe_check(&f, 2);
        assert!(r.is_pe && r.min_singular_value > r.rank_tolerance);

        let short = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let r = pe_check(&short, 2);
        assert!(!r.is_pe && r.reason.is_some());
    }

    #[test]
    fn lambda_matches_transcription_for_scalar_system() {
        let t = 100.0f64;
        let expected = 2.0 * 2.0 * 8f64.ln().powi(2) * (4.0 * t).ln().powi(2);
        assert_relative_eq!(lambda_threshold(1, 1, 100, LogBase::Natural), expected, max_relative = 1e-14);
        let expected2 = 4.0 * 3f64.powi(2) * (400f64.log2()).powi(2);
        assert_relative_eq!(lambda_threshold(1, 1, 100, LogBase::Two), expected2, max_relative = 1e-14);
    }

    #[test]
    fn epsilon_is_decreasing_probability() {
        for (m, n) in [(1, 1), (1, 2), (2, 3)] {
            let mut prev = f64::INFINITY;
            for t in (10..=10_000).step_by(10) {
                let l = ln_epsilon_t(m, n, t, LogBase::Natural);
                assert!(l.is_finite() && l < 0.0);
                assert!(l < prev);
                prev = l;
            }
        }
        // small-horizon value without underflow
        let e = epsilon_t(1, 1, 1, LogBase::Natural);
        assert!(e > 0.0 && e < 1.0);
    }

    #[test]
    fn hankel_bound_values() {
        assert_relative_eq!(hankel_sv_bound(4, 2, 2f64.sqrt()).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(hankel_sv_bound(2, 2, 1.0).is_err());
        let big = 1_000_000;
        let ratio = hankel_sv_bound(4 * big, 2, 1.0).unwrap() / hankel_sv_bound(big, 2, 1.0).unwrap();
        assert!((ratio - 2.0).abs() < 1e-5);
    }

    #[test]
    fn p2_of_degenerate_plant() {
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1))
            .unwrap()
            .with_sigma_w(1.0)
            .unwrap();
        let p2 = p2_matrix(&sys).unwrap();
        assert_eq!(p2, DMatrix::identity(5, 5));
        let (b, s) = combined_sv_bound(&sys, 10, 1.0).unwrap();
        assert_relative_eq!(s, 1.0, epsilon = 1e-14);
        assert_relative_eq!(b, 8f64.sqrt() / 6f64.sqrt(), epsilon = 1e-14);
        assert!(p2_matrix(&LtiSystem::paper41()).is_err());
        assert!(combined_sv_bound(&sys, 10, 0.0).is_err());
    }

    #[test]
    fn rho_is_scale_invariant() {
        let x0 = DMatrix::from_fn(1, 12, |_, j| ((j * 7 % 5) as f64) - 2.0);
        let z0 = DMatrix::from_fn(2, 12, |i, j| (((i + 3) * (j + 1) * 13 % 11) as f64) - 5.0);
        let r1 = empirical_rho(&x0, &z0).unwrap();
        let r2 = empirical_rho(&(&x0 * 3.5), &(&z0 * 3.5)).unwrap();
        assert!(r1 > 0.0);
        assert_relative_eq!(r1, r2, max_relative = 1e-12);
    }
}
