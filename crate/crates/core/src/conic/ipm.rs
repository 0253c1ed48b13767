//! Primal-dual interior-point method on the homogeneous self-dual embedding.
//!
//! In cone-LP form the problem is `min c'x  s.t.  G x + s = h, s >= 0` with
//! `G = -A` and `h = F0`, where `A(x) = sum_i x_i F_i`. Every iteration uses
//! Nesterov-Todd scaling per block, a Mehrotra predictor-corrector step and
//! one round of iterative refinement on the reduced (Schur complement) KKT
//! system. Variables whose coefficient matrices are linear combinations of
//! the others are fixed at zero beforehand.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::structure::Structure;
use super::{LmiProblem, SolveResult, SolveSettings, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg;

type Blocks = Vec<DMatrix<f64>>;

/// Relative pivot threshold of the dependency presolve.
const PRESOLVE_TOL: f64 = 1e-12;
const STEP_FRACTION: f64 = 0.99;

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm(a: &[DMatrix<f64>]) -> f64 {
    inner(a, a).sqrt()
}

/// Per-block scaling `z~ = R' z R`, `s~ = R^{-1} s R^{-T}`, both equal to `diag(lambda)`.
struct Nt {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl Nt {
    /// Scaling for the pair `(s, z)` given in the coordinates of `(r0, rinv0)`.
    fn new(s: &DMatrix<f64>, z: &DMatrix<f64>, r0: &DMatrix<f64>, rinv0: &DMatrix<f64>) -> Option<Self> {
        let ls = linalg::symmetrize(s).cholesky()?.unpack();
        let lz = linalg::symmetrize(z).cholesky()?.unpack();
        let svd = (lz.transpose() * &ls).svd(true, true);
        let (u, vt) = (svd.u?, svd.v_t?);
        let sig = svd.singular_values;
        if sig.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return None;
        }
        let isq = DMatrix::from_diagonal(&sig.map(|v| 1.0 / v.sqrt()));
        let r = r0 * ls * vt.transpose() * &isq;
        // the product formula for R^{-1} drifts when lambda is badly spread
        let rinv = r
            .clone()
            .try_inverse()
            .unwrap_or_else(|| &isq * u.transpose() * lz.transpose() * rinv0);
        Some(Self { r, rinv, lambda: sig })
    }

    fn identity(d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::identity(d, d), DMatrix::identity(d, d))
    }

    fn s(&self) -> DMatrix<f64> {
        linalg::symmetrize(&(&self.r * DMatrix::from_diagonal(&self.lambda) * self.r.transpose()))
    }

    fn z(&self) -> DMatrix<f64> {
        linalg::symmetrize(&(self.rinv.transpose() * DMatrix::from_diagonal(&self.lambda) * &self.rinv))
    }

    fn ldiv(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let l = &self.lambda;
        DMatrix::from_fn(v.nrows(), v.ncols(), |a, b| 2.0 * v[(a, b)] / (l[a] + l[b]))
    }

    /// Largest `alpha` with `diag(lambda) + alpha * d >= 0`.
    fn max_step(&self, d: &DMatrix<f64>) -> f64 {
        let l = &self.lambda;
        let m = DMatrix::from_fn(d.nrows(), d.ncols(), |a, b| d[(a, b)] / (l[a] * l[b]).sqrt());
        let ev = linalg::min_eigenvalue(&m);
        if ev < 0.0 {
            -1.0 / ev
        } else {
            f64::INFINITY
        }
    }
}

/// Factor of the Schur complement `H = M^T M`: Cholesky of the
/// Jacobi-equilibrated `D H D` while `H` is well conditioned, otherwise the
/// triangular factor of a QR decomposition of `M` itself.
enum Schur {
    Chol { chol: Cholesky<f64, Dyn>, d: DVector<f64> },
    Qr { r: DMatrix<f64> },
}

/// Condition estimate of `D H D` above which the QR path is taken.
const CHOL_COND_LIMIT: f64 = 1e10;

impl Schur {
    fn new(st: &Structure, rinv: &[DMatrix<f64>]) -> Option<Self> {
        let ninv: Blocks = rinv.iter().map(|w| w.transpose() * w).collect();
        let mut hs = st.schur(&ninv);
        let d = hs.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
        for j in 0..hs.ncols() {
            for i in 0..hs.nrows() {
                hs[(i, j)] *= d[i] * d[j];
            }
        }
        if let Some(chol) = hs.cholesky() {
            let l = chol.l_dirty().diagonal();
            let (lo, hi) = l.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
            if lo > 0.0 && (hi / lo).powi(2) < CHOL_COND_LIMIT {
                return Some(Schur::Chol { chol, d });
            }
        }
        let m = st.scaled_operator(rinv);
        if m.nrows() < m.ncols() {
            return None;
        }
        let r = m.qr().r();
        if r.diagonal().iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return None;
        }
        Some(Schur::Qr { r })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Schur::Chol { chol, d } => chol.solve(&b.component_mul(d)).component_mul(d),
            Schur::Qr { r } => {
                let w = r.tr_solve_upper_triangular(b).unwrap_or_else(|| b.clone());
                r.solve_upper_triangular(&w).unwrap_or(w)
            }
        }
    }
}

/// Refinement rounds allowed per KKT solve.
const MAX_REFINE: usize = 4;

/// Newton system in the scaled coordinates of the current NT point, with
/// `A~(x) = W A(x) W^T` per block and `W = R^{-1}`.
struct Kkt<'a> {
    st: &'a Structure,
    h: Schur,
    w: Blocks,
}

impl Kkt<'_> {
    fn scaled_apply(&self, x: &DVector<f64>) -> Blocks {
        let ax = self.st.apply(x);
        self.w.iter().zip(&ax).map(|(w, a)| congruence(w, a)).collect()
    }

    fn scaled_adjoint(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let t: Blocks = self.w.iter().zip(z).map(|(w, m)| congruence(&w.transpose(), m)).collect();
        self.st.adjoint(&t)
    }

    /// Solves `-A~^T dz = bx`, `-A~ dx - dz = bz`.
    fn solve_once(&self, bx: &DVector<f64>, bz: &[DMatrix<f64>]) -> (DVector<f64>, Blocks) {
        let dx = self.h.solve(&(bx - self.scaled_adjoint(bz)));
        let adx = self.scaled_apply(&dx);
        let dz = adx.iter().zip(bz).map(|(a, b)| -a - b).collect();
        (dx, dz)
    }

    fn residual(&self, bx: &DVector<f64>, bz: &[DMatrix<f64>], dx: &DVector<f64>, dz: &[DMatrix<f64>]) -> (DVector<f64>, Blocks, f64) {
        let rx = bx + self.scaled_adjoint(dz);
        let adx = self.scaled_apply(dx);
        let rz: Blocks = (0..bz.len()).map(|j| &bz[j] + &adx[j] + &dz[j]).collect();
        let size = (rx.norm_squared() + inner(&rz, &rz)).sqrt();
        (rx, rz, size)
    }

    fn solve(&self, bx: &DVector<f64>, bz: &[DMatrix<f64>]) -> (DVector<f64>, Blocks) {
        let (mut dx, mut dz) = self.solve_once(bx, bz);
        let (mut rx, mut rz, mut size) = self.residual(bx, bz, &dx, &dz);
        for _ in 0..MAX_REFINE {
            let (cx, cz) = self.solve_once(&rx, &rz);
            let nx = &dx + cx;
            let nz: Blocks = dz.iter().zip(cz).map(|(a, b)| a + b).collect();
            let (nrx, nrz, nsize) = self.residual(bx, bz, &nx, &nz);
            if !(nsize < size) {
                break;
            }
            let done = nsize > 0.5 * size;
            (dx, dz, rx, rz, size) = (nx, nz, nrx, nrz, nsize);
            if done {
                break;
            }
        }
        (dx, dz)
    }
}

/// `W M W^T`, symmetrized.
fn congruence(w: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(&(w * m * w.transpose()))
}

/// Greedy pivoted Cholesky; returns the indices of a maximal well-conditioned
/// independent subset, in increasing order.
fn independent_columns(gram: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let p = gram.nrows();
    let mut d: Vec<f64> = gram.diagonal().iter().copied().collect();
    let dmax = d.iter().copied().fold(0.0, f64::max);
    let mut chosen = Vec::new();
    let mut used = vec![false; p];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if dmax <= 0.0 {
        return chosen;
    }
    while let Some((j, &dj)) = d
        .iter()
        .enumerate()
        .filter(|(i, _)| !used[*i])
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        if dj <= rel_tol * dmax {
            break;
        }
        let piv = dj.sqrt();
        let mut col = vec![0.0; p];
        for i in 0..p {
            if used[i] || i == j {
                continue;
            }
            let mut v = gram[(i, j)];
            for c in &cols {
                v -= c[i] * c[j];
            }
            col[i] = v / piv;
            d[i] -= col[i] * col[i];
        }
        col[j] = piv;
        used[j] = true;
        chosen.push(j);
        cols.push(col);
    }
    chosen.sort_unstable();
    chosen
}

#[derive(Clone)]
struct Outcome {
    status: SolveStatus,
    x: DVector<f64>,
    z: Blocks,
    iterations: usize,
    pres: f64,
    dres: f64,
    gap: f64,
}

/// The best iterate seen so far when the method has to stop early.
fn bail(best: Option<(f64, Outcome)>, current: Outcome, status: SolveStatus) -> Outcome {
    let mut o = best.map_or(current, |b| b.1);
    o.status = status;
    o
}

fn shift_into_cone(m: &mut Blocks) {
    let ts = m
        .iter()
        .map(|b| -linalg::min_eigenvalue(b))
        .fold(f64::NEG_INFINITY, f64::max);
    if ts >= -1e-8 * norm(m).max(1.0) {
        for b in m.iter_mut() {
            let d = b.nrows();
            *b += DMatrix::<f64>::identity(d, d) * (1.0 + ts);
        }
    }
}

fn run(st: &Structure, c: &DVector<f64>, gram: &DMatrix<f64>, settings: &SolveSettings) -> Outcome {
    let f0 = st.f0();
    let deg: usize = st.block_sizes().iter().sum();
    let resx0 = c.norm().max(1.0);
    let resz0 = norm(&f0).max(1.0);
    let (ftol, gtol) = (settings.feas_tol, settings.gap_tol);

    let mut out = Outcome {
        status: SolveStatus::NumericalTrouble,
        x: DVector::zeros(st.num_vars()),
        z: f0.iter().map(|b| DMatrix::zeros(b.nrows(), b.ncols())).collect(),
        iterations: 0,
        pres: f64::INFINITY,
        dres: f64::INFINITY,
        gap: f64::INFINITY,
    };

    let Some(gchol) = gram.clone().cholesky() else {
        return out;
    };
    let mut x = -gchol.solve(&st.adjoint(&f0));
    let ax = st.apply(&x);
    let mut s: Blocks = f0.iter().zip(&ax).map(|(f, a)| f + a).collect();
    let mut z = st.apply(&gchol.solve(c));
    shift_into_cone(&mut s);
    shift_into_cone(&mut z);
    let (mut tau, mut kappa) = (1.0, 1.0);

    let mut scal = Vec::with_capacity(s.len());
    for (sj, zj) in s.iter().zip(&z) {
        let (r0, ri0) = Nt::identity(sj.nrows());
        match Nt::new(sj, zj, &r0, &ri0) {
            Some(w) => scal.push(w),
            None => return out,
        }
    }

    let mut best: Option<(f64, Outcome)> = None;
    for iter in 0..=settings.max_iter {
        out.iterations = iter;
        let ax = st.apply(&x);
        let rz: Blocks = (0..s.len()).map(|j| &s[j] - &ax[j] - &f0[j] * tau).collect();
        let atz = st.adjoint(&z);
        let rx = c * tau - &atz;
        let cx = c.dot(&x);
        let f0z = inner(&f0, &z);
        let rt = kappa + cx + f0z;
        let sz = inner(&s, &z);
        let mu = (sz + tau * kappa) / (deg as f64 + 1.0);
        let pcost = cx / tau;

        let dcost = -f0z / tau;
        let feas = ax
            .iter()
            .zip(&f0)
            .map(|(a, f)| linalg::min_eigenvalue(&(f + a / tau)))
            .fold(f64::INFINITY, f64::min);

        out.pres = norm(&rz) / tau / resz0;
        out.dres = rx.norm() / tau / resx0;
        out.gap = (pcost - dcost).abs() / pcost.abs().max(1.0);
        out.x = &x / tau;
        out.z = z.iter().map(|b| b / tau).collect();

        if ![out.pres, out.dres, out.gap, mu, feas].iter().all(|v| v.is_finite()) {
            return bail(best, out, SolveStatus::NumericalTrouble);
        }
        if out.dres <= ftol && out.gap <= gtol && feas >= -ftol {
            out.status = SolveStatus::Optimal;
            return out;
        }
        let merit = (out.dres / ftol).max(out.gap / gtol).max(-feas / ftol);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, out.clone()));
        }
        if f0z < 0.0 && atz.norm() / resx0 / (-f0z) <= ftol {
            out.status = SolveStatus::PrimalInfeasible;
            out.z = z.iter().map(|b| b / (-f0z)).collect();
            return out;
        }
        if cx < 0.0 {
            let gs: Blocks = s.iter().zip(&ax).map(|(a, b)| a - b).collect();
            if norm(&gs) / resz0 / (-cx) <= ftol {
                out.status = SolveStatus::DualInfeasible;
                out.x = &x / (-cx);
                return out;
            }
        }
        if iter == settings.max_iter {
            return bail(best, out, SolveStatus::IterLimit);
        }

        let rinv: Blocks = scal.iter().map(|w| w.rinv.clone()).collect();
        let Some(h) = Schur::new(st, &rinv) else {
            return bail(best, out, SolveStatus::NumericalTrouble);
        };
        let kkt = Kkt { st, h, w: rinv };
        let f0t: Blocks = kkt.w.iter().zip(&f0).map(|(w, f)| congruence(w, f)).collect();
        let rzt: Blocks = kkt.w.iter().zip(&rz).map(|(w, r)| congruence(w, r)).collect();
        let (x1, z1) = kkt.solve(&-c, &f0t);
        let denom = -kappa / tau + c.dot(&x1) + inner(&f0t, &z1);

        let mut sigma = 0.0;
        let mut affine: Option<(Blocks, Blocks, f64, f64)> = None;
        for phase in 0..2 {
            let ds: Blocks = scal
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let d = w.lambda.len();
                    let mut m = DMatrix::from_diagonal(&w.lambda.map(|l| -l * l));
                    if let Some((dsa, dza, _, _)) = &affine {
                        m -= (&dsa[j] * &dza[j] + &dza[j] * &dsa[j]) * 0.5;
                        m += DMatrix::<f64>::identity(d, d) * (sigma * mu);
                    }
                    m
                })
                .collect();
            let mut dk = -tau * kappa;
            if let Some((_, _, dta, dka)) = &affine {
                dk += -dta * dka + sigma * mu;
            }
            let fac = 1.0 - sigma;
            let bx = &rx * -fac;
            let bt = -fac * rt;
            let ldiv: Blocks = scal.iter().zip(&ds).map(|(w, d)| w.ldiv(d)).collect();
            let bz: Blocks = (0..ds.len())
                .map(|j| &rzt[j] * -fac - &ldiv[j])
                .collect();
            let (x2, z2) = kkt.solve(&bx, &bz);
            let dtau = (bt - dk / tau - c.dot(&x2) - inner(&f0t, &z2)) / denom;
            if !dtau.is_finite() {
                return bail(best, out, SolveStatus::NumericalTrouble);
            }
            let dx = &x2 + &x1 * dtau;
            let dz: Blocks = z2.iter().zip(&z1).map(|(a, b)| a + b * dtau).collect();
            let dkap = (dk - kappa * dtau) / tau;
            let dzt: Blocks = dz.iter().map(linalg::symmetrize).collect();
            let dst: Blocks = ldiv.iter().zip(&dzt).map(|(l, d)| linalg::symmetrize(&(l - d))).collect();

            let mut amax = f64::INFINITY;
            for (w, (a, b)) in scal.iter().zip(dst.iter().zip(&dzt)) {
                amax = amax.min(w.max_step(a)).min(w.max_step(b));
            }
            if dtau < 0.0 {
                amax = amax.min(-tau / dtau);
            }
            if dkap < 0.0 {
                amax = amax.min(-kappa / dkap);
            }

            if phase == 0 {
                sigma = (1.0 - amax.min(1.0)).powi(3);
                affine = Some((dst, dzt, dtau, dkap));
                continue;
            }

            let alpha = (STEP_FRACTION * amax).min(1.0);
            if !(alpha > 1e-14) {
                return bail(best, out, SolveStatus::NumericalTrouble);
            }
            x += &dx * alpha;
            tau += alpha * dtau;
            kappa += alpha * dkap;
            for j in 0..scal.len() {
                let w = &scal[j];
                let sj = linalg::symmetrize(&(&s[j] + &w.r * &dst[j] * w.r.transpose() * alpha));
                let zj = linalg::symmetrize(&(&z[j] + w.rinv.transpose() * &dzt[j] * &w.rinv * alpha));
                let (r0, ri0) = Nt::identity(sj.nrows());
                let next = match Nt::new(&sj, &zj, &r0, &ri0) {
                    Some(w) => Some((w, sj, zj)),
                    None => {
                        // direct update lost definiteness to rounding; take the scaled one
                        let lam = DMatrix::from_diagonal(&w.lambda);
                        let st_ = &lam + &dst[j] * alpha;
                        let zt_ = &lam + &dzt[j] * alpha;
                        Nt::new(&st_, &zt_, &w.r, &w.rinv).map(|w| {
                            let (a, b) = (w.s(), w.z());
                            (w, a, b)
                        })
                    }
                };
                match next {
                    Some((w, sj, zj)) => {
                        scal[j] = w;
                        s[j] = sj;
                        z[j] = zj;
                    }
                    None => return bail(best, out, SolveStatus::NumericalTrouble),
                }
            }
        }
    }
    out
}

/// Solves an LMI problem. Malformed input is an error; every other outcome,
/// including infeasibility, is reported through [`SolveResult::status`].
/// The result is a deterministic function of the problem and the settings.
pub fn solve(problem: &LmiProblem, settings: &SolveSettings) -> Result<SolveResult> {
    problem.validate()?;
    for (name, v) in [("gap_tol", settings.gap_tol), ("feas_tol", settings.feas_tol)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(name, format!("must be a positive number, got {v}")));
        }
    }
    if settings.max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }

    let nv = problem.num_vars();
    let cfull = problem.objective();
    let identity_map: Vec<Option<usize>> = (0..nv).map(Some).collect();
    let full = Structure::new(problem, &identity_map, nv);
    let eye: Blocks = full.block_sizes().iter().map(|&d| DMatrix::identity(d, d)).collect();
    let gram = full.schur(&eye);
    let active = independent_columns(&gram, PRESOLVE_TOL);
    let eliminated = nv - active.len();

    let sizes = problem.block_sizes();
    let zero_blocks = || -> Blocks { sizes.iter().map(|&d| DMatrix::zeros(d, d)).collect() };
    let finish = |status, z: Vec<f64>, dual: Blocks, iterations, pres, dres, gap| {
        let feas = problem
            .block_min_eigenvalues(&z)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let f0: Blocks = problem.blocks().iter().map(|b| b.matrix(None)).collect();
        SolveResult {
            objective_value: problem.objective_value(&z),
            dual_objective: -inner(&f0, &dual),
            z,
            status,
            gap,
            feas,
            primal_residual: pres,
            dual_residual: dres,
            iterations,
            eliminated_vars: eliminated,
            dual,
        }
    };

    // a dependent variable with a cost of its own is an unbounded direction
    if eliminated > 0 {
        let mut is_active = vec![false; nv];
        for &i in &active {
            is_active[i] = true;
        }
        let ca = DVector::from_iterator(active.len(), active.iter().map(|&i| cfull[i]));
        let gaa = gram.select_rows(active.iter()).select_columns(active.iter());
        let gchol = gaa.cholesky();
        for j in (0..nv).filter(|&j| !is_active[j]) {
            let (resid, alpha) = match &gchol {
                Some(ch) => {
                    let g = DVector::from_iterator(active.len(), active.iter().map(|&i| gram[(i, j)]));
                    let alpha = ch.solve(&g);
                    (cfull[j] - alpha.dot(&ca), alpha)
                }
                None => (cfull[j], DVector::zeros(active.len())),
            };
            let scale = ca.norm().max(1.0) * (1.0 + alpha.norm()) + cfull[j].abs();
            if resid.abs() > 1e-9 * scale {
                let mut dir = vec![0.0; nv];
                dir[j] = -resid.signum();
                for (k, &i) in active.iter().enumerate() {
                    dir[i] = resid.signum() * alpha[k];
                }
                let mut r = finish(SolveStatus::DualInfeasible, dir, zero_blocks(), 0, f64::NAN, f64::NAN, f64::NAN);
                r.objective_value = f64::NEG_INFINITY;
                return Ok(r);
            }
        }
    }

    if active.is_empty() {
        let z = vec![0.0; nv];
        let feas = problem.block_min_eigenvalues(&z).into_iter().fold(f64::INFINITY, f64::min);
        let status = if feas >= -settings.feas_tol {
            SolveStatus::Optimal
        } else {
            SolveStatus::PrimalInfeasible
        };
        return Ok(finish(status, z, zero_blocks(), 0, 0.0, 0.0, 0.0));
    }

    let mut var_map = vec![None; nv];
    for (k, &i) in active.iter().enumerate() {
        var_map[i] = Some(k);
    }
    let st = Structure::new(problem, &var_map, active.len());
    let c = DVector::from_iterator(active.len(), active.iter().map(|&i| cfull[i]));
    let gaa = gram.select_rows(active.iter()).select_columns(active.iter());
    let o = run(&st, &c, &gaa, settings);

    let mut z = vec![0.0; nv];
    for (k, &i) in active.iter().enumerate() {
        z[i] = o.x[k];
    }
    let mut r = finish(o.status, z, o.z, o.iterations, o.pres, o.dres, o.gap);
    if o.status == SolveStatus::PrimalInfeasible {
        r.objective_value = f64::INFINITY;
    }
    Ok(r)
}
