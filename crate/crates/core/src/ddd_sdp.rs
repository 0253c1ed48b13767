//! The certainty-equivalence and robustness-promoting data-driven LQR
//! programs, their translation to [`LmiProblem`]s and gain recovery.
//!
//! Decision variable `Y` is `T x n`. `X0 Y` must be symmetric for the LMIs to
//! make sense, so `n(n-1)/2` entries of `Y` are eliminated in favour of the
//! others (reduced row echelon form of the symmetry constraints) and the
//! solver sees only the remaining free entries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conic::{self, LmiBlock, LmiProblem, SolveResult, SolveSettings, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lti_lab::{LqrWeights, TrajectoryData};

/// How the `T x T` slack of the regularized program is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RpForm {
    /// One `(T+n)` block `[[S, Y], [Y', X0Y]]` with `eta * trace(S)`.
    Full,
    /// `T` blocks `[[t_i, y_i], [y_i', X0Y]]` of size `n+1` with `eta * sum t_i`.
    #[default]
    Epigraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
enum Slack {
    None,
    Full,
    Epigraph,
}

/// Where every block of the program lives in `z`.
#[derive(Debug, Clone)]
struct Layout {
    t: usize,
    n: usize,
    m: usize,
    /// Each original entry `Y[i, j]` (index `i * n + j`) as a combination of free variables.
    y_expr: Vec<Vec<(usize, f64)>>,
    num_y: usize,
    x_offset: usize,
    slack_offset: usize,
    slack: Slack,
}

impl Layout {
    fn x_var(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // row-major upper triangle
        self.x_offset + a * self.m - a * (a + 1) / 2 + b
    }

    fn s_var(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.slack_offset + i * self.t - i * (i + 1) / 2 + j
    }

    fn y_from(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.t, self.n, |i, j| {
            self.y_expr[i * self.n + j].iter().map(|&(v, c)| c * z[v]).sum()
        })
    }

    fn x_from(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |a, b| z[self.x_var(a, b)])
    }

    /// Linear form `sum_k coef[k] * Y_k` over original entries, in free variables.
    fn form(&self, coef: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let mut dense = vec![0.0; self.num_y];
        for &(k, c) in coef {
            for &(v, e) in &self.y_expr[k] {
                dense[v] += c * e;
            }
        }
        dense
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .collect()
    }
}

/// Expresses `Y` in free coordinates subject to `X0 Y = (X0 Y)'`.
fn symmetric_parametrization(x0: &DMatrix<f64>) -> (Vec<Vec<(usize, f64)>>, usize) {
    let (n, t) = (x0.nrows(), x0.ncols());
    let ny = t * n;
    let rows = n * (n - 1) / 2;
    let mut c = DMatrix::zeros(rows, ny);
    let mut r = 0;
    for a in 0..n {
        for b in (a + 1)..n {
            for i in 0..t {
                c[(r, i * n + b)] += x0[(a, i)];
                c[(r, i * n + a)] -= x0[(b, i)];
            }
            r += 1;
        }
    }

    // reduced row echelon form with complete pivoting
    let scale = linalg::max_abs(&c).max(f64::MIN_POSITIVE);
    let mut pivots: Vec<usize> = Vec::new();
    let mut is_pivot = vec![false; ny];
    for k in 0..rows {
        let mut best = (0.0, 0, 0);
        for i in k..rows {
            for j in (0..ny).filter(|&j| !is_pivot[j]) {
                if c[(i, j)].abs() > best.0 {
                    best = (c[(i, j)].abs(), i, j);
                }
            }
        }
        if best.0 <= 1e-12 * scale {
            break;
        }
        let (_, pi, pj) = best;
        c.swap_rows(k, pi);
        let p = c[(k, pj)];
        for j in 0..ny {
            c[(k, j)] /= p;
        }
        for i in (0..rows).filter(|&i| i != k) {
            let f = c[(i, pj)];
            if f != 0.0 {
                for j in 0..ny {
                    c[(i, j)] -= f * c[(k, j)];
                }
            }
        }
        is_pivot[pj] = true;
        pivots.push(pj);
    }

    let free: Vec<usize> = (0..ny).filter(|&j| !is_pivot[j]).collect();
    let mut free_index = vec![usize::MAX; ny];
    for (v, &j) in free.iter().enumerate() {
        free_index[j] = v;
    }
    let mut expr = vec![Vec::new(); ny];
    for (v, &j) in free.iter().enumerate() {
        expr[j] = vec![(v, 1.0)];
    }
    for (k, &pj) in pivots.iter().enumerate() {
        expr[pj] = free
            .iter()
            .filter(|&&j| c[(k, j)] != 0.0)
            .map(|&j| (free_index[j], -c[(k, j)]))
            .collect();
    }
    (expr, free.len())
}

/// An [`LmiProblem`] together with the map from its variables back to `Y`,
/// `X` and the slack.
#[derive(Debug, Clone)]
pub struct DddProgram {
    problem: LmiProblem,
    layout: Layout,
    /// `T < 2n + m`: the data cannot pin down a unique solution.
    pub underdetermined: bool,
    pub eta: Option<f64>,
}

impl DddProgram {
    pub fn problem(&self) -> &LmiProblem {
        &self.problem
    }

    pub fn into_problem(self) -> LmiProblem {
        self.problem
    }

    /// Number of free entries of `Y` seen by the solver.
    pub fn free_y_vars(&self) -> usize {
        self.layout.num_y
    }

    pub fn y_from(&self, z: &[f64]) -> DMatrix<f64> {
        self.layout.y_from(z)
    }

    pub fn x_from(&self, z: &[f64]) -> DMatrix<f64> {
        self.layout.x_from(z)
    }

    fn slack_from(&self, z: &[f64]) -> Option<RpSlack> {
        let l = &self.layout;
        match l.slack {
            Slack::None => None,
            Slack::Full => Some(RpSlack::Full(DMatrix::from_fn(l.t, l.t, |i, j| z[l.s_var(i, j)]))),
            Slack::Epigraph => Some(RpSlack::Epigraph(z[l.slack_offset..l.slack_offset + l.t].to_vec())),
        }
    }
}

fn check_data(data: &TrajectoryData, weights: &LqrWeights) -> Result<()> {
    let (n, m, t) = (data.n(), data.m(), data.horizon);
    if data.x0.shape() != (n, t) || data.x1.shape() != (n, t) || data.u0.shape() != (m, t) {
        return Err(Error::dims(
            "trajectory data",
            format!("X0, X1: {n}x{t}, U0: {m}x{t}"),
            format!("{:?}, {:?}, {:?}", data.x0.shape(), data.x1.shape(), data.u0.shape()),
        ));
    }
    if weights.q().nrows() != n {
        return Err(Error::dims("Q", n, weights.q().nrows()));
    }
    if weights.r().nrows() != m {
        return Err(Error::dims("R", m, weights.r().nrows()));
    }
    Ok(())
}

/// Entry `(a, b)` of a symmetric matrix as a linear form `[(var, coef)]`.
type SymForms = Vec<Vec<Vec<(usize, f64)>>>;

/// Builds the blocks shared by both programs and returns the `X0 Y` forms.
fn build_common(
    data: &TrajectoryData,
    weights: &LqrWeights,
    slack: Slack,
) -> Result<(LmiProblem, Layout, SymForms)> {
    check_data(data, weights)?;
    let (n, m, t) = (data.n(), data.m(), data.horizon);
    let sqrt_r = linalg::spd_sqrt(weights.r(), "R")?;

    let (y_expr, num_y) = symmetric_parametrization(&data.x0);
    let x_offset = num_y;
    let slack_offset = x_offset + m * (m + 1) / 2;
    let num_slack = match slack {
        Slack::None => 0,
        Slack::Full => t * (t + 1) / 2,
        Slack::Epigraph => t,
    };
    let layout = Layout {
        t,
        n,
        m,
        y_expr,
        num_y,
        x_offset,
        slack_offset,
        slack,
    };
    let mut problem = LmiProblem::new(slack_offset + num_slack);

    // (L Y)[a, b] as a form, for a data matrix L with T columns
    let product = |l: &DMatrix<f64>, a: usize, b: usize| -> Vec<(usize, f64)> {
        let coef: Vec<(usize, f64)> = (0..t).map(|i| (i * n + b, l[(a, i)])).collect();
        layout.form(&coef)
    };
    let x0y: SymForms = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a <= b {
                        product(&data.x0, a, b)
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        })
        .collect();
    let x0y_at = |a: usize, b: usize| -> &Vec<(usize, f64)> {
        if a <= b {
            &x0y[a][b]
        } else {
            &x0y[b][a]
        }
    };
    let sru0 = &sqrt_r * &data.u0;

    // [[X0Y - I, X1Y], [., X0Y]]
    let mut b1 = LmiBlock::new(2 * n);
    for a in 0..n {
        b1.add_constant(a, a, -1.0);
        for b in 0..n {
            if a <= b {
                b1.add_form(a, b, x0y_at(a, b));
                b1.add_form(n + a, n + b, x0y_at(a, b));
            }
            b1.add_form(a, n + b, &product(&data.x1, a, b));
        }
    }
    problem.add_block(b1);

    // [[X, sqrt(R) U0 Y], [., X0Y]]
    let mut b2 = LmiBlock::new(m + n);
    for a in 0..m {
        for b in a..m {
            b2.add_term(layout.x_var(a, b), a, b, 1.0);
        }
        for b in 0..n {
            b2.add_form(a, m + b, &product(&sru0, a, b));
        }
    }
    for a in 0..n {
        for b in a..n {
            b2.add_form(m + a, m + b, x0y_at(a, b));
        }
    }
    problem.add_block(b2);

    // trace(Q X0Y) + trace(X)
    let q = weights.q();
    for a in 0..n {
        for b in 0..n {
            for &(v, c) in x0y_at(a, b) {
                problem.add_objective(v, q[(b, a)] * c);
            }
        }
    }
    for a in 0..m {
        problem.add_objective(layout.x_var(a, a), 1.0);
    }

    let full_x0y = (0..n)
        .map(|a| (0..n).map(|b| x0y_at(a, b).clone()).collect())
        .collect();
    Ok((problem, layout, full_x0y))
}

/// The certainty-equivalence program: `min trace(Q X0Y) + trace(X)` subject
/// to `[[X0Y - I, X1Y], [., X0Y]] >= 0` and `[[X, sqrt(R) U0Y], [., X0Y]] >= 0`.
pub fn build_ce(data: &TrajectoryData, weights: &LqrWeights) -> Result<DddProgram> {
    let (problem, layout, _) = build_common(data, weights, Slack::None)?;
    Ok(DddProgram {
        underdetermined: data.horizon < 2 * data.n() + data.m(),
        problem,
        layout,
        eta: None,
    })
}

/// The regularized program: the CE objective plus `eta * trace(Y (X0Y)^{-1} Y')`
/// written through a slack.
pub fn build_rp(data: &TrajectoryData, weights: &LqrWeights, eta: f64, form: RpForm) -> Result<DddProgram> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    let slack = match form {
        RpForm::Full => Slack::Full,
        RpForm::Epigraph => Slack::Epigraph,
    };
    let (mut problem, layout, x0y) = build_common(data, weights, slack)?;
    let (n, t) = (layout.n, layout.t);
    let y_entry = |i: usize, b: usize| layout.form(&[(i * n + b, 1.0)]);

    match form {
        RpForm::Full => {
            let mut blk = LmiBlock::new(t + n);
            for i in 0..t {
                for j in i..t {
                    blk.add_term(layout.s_var(i, j), i, j, 1.0);
                }
                problem.add_objective(layout.s_var(i, i), eta);
                for b in 0..n {
                    blk.add_form(i, t + b, &y_entry(i, b));
                }
            }
            for a in 0..n {
                for b in a..n {
                    blk.add_form(t + a, t + b, &x0y[a][b]);
                }
            }
            problem.add_block(blk);
        }
        RpForm::Epigraph => {
            for i in 0..t {
                let mut blk = LmiBlock::new(n + 1);
                let ti = layout.slack_offset + i;
                blk.add_term(ti, 0, 0, 1.0);
                problem.add_objective(ti, eta);
                for b in 0..n {
                    blk.add_form(0, 1 + b, &y_entry(i, b));
                }
                for a in 0..n {
                    for b in a..n {
                        blk.add_form(1 + a, 1 + b, &x0y[a][b]);
                    }
                }
                problem.add_block(blk);
            }
        }
    }
    Ok(DddProgram {
        underdetermined: data.horizon < 2 * data.n() + data.m(),
        problem,
        layout,
        eta: Some(eta),
    })
}

/// `K = -U0 Y (X0 Y)^{-1}`. `cond_tol` defaults to `1e-8 * sigma_max(X0 Y)`.
pub fn recover_gain(u0: &DMatrix<f64>, x0: &DMatrix<f64>, y: &DMatrix<f64>, cond_tol: Option<f64>) -> Result<DMatrix<f64>> {
    if x0.ncols() != y.nrows() || u0.ncols() != y.nrows() {
        return Err(Error::dims("Y rows", x0.ncols(), y.nrows()));
    }
    let x0y = x0 * y;
    if !x0y.is_square() {
        return Err(Error::dims("X0 Y", "square", format!("{}x{}", x0y.nrows(), x0y.ncols())));
    }
    let sv = linalg::singular_values(&x0y);
    let (smax, smin) = (sv[0], *sv.last().unwrap_or(&0.0));
    let tol = cond_tol.unwrap_or(1e-8 * smax);
    if !(smin >= tol) || smin == 0.0 {
        return Err(Error::Singular {
            what: "X0 Y",
            sigma_min: smin,
            tolerance: tol,
        });
    }
    let u0y = u0 * y;
    let kt = x0y
        .transpose()
        .lu()
        .solve(&u0y.transpose())
        .ok_or(Error::Singular {
            what: "X0 Y",
            sigma_min: smin,
            tolerance: tol,
        })?;
    Ok(-kt.transpose())
}

fn pd_inverse_apply(x0y: &DMatrix<f64>, rhs_t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min_ev = linalg::min_eigenvalue(x0y);
    if !(min_ev > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: "X0 Y",
            min_eigenvalue: min_ev,
        });
    }
    x0y.clone().lu().solve(rhs_t).ok_or(Error::NotPositiveDefinite {
        what: "X0 Y",
        min_eigenvalue: min_ev,
    })
}

/// `trace(Q X0Y) + trace(sqrt(R) U0Y (X0Y)^{-1} (sqrt(R) U0Y)')`.
pub fn reduced_objective_ce(data: &TrajectoryData, weights: &LqrWeights, y: &DMatrix<f64>) -> Result<f64> {
    check_data(data, weights)?;
    if y.shape() != (data.horizon, data.n()) {
        return Err(Error::dims("Y", format!("{}x{}", data.horizon, data.n()), format!("{}x{}", y.nrows(), y.ncols())));
    }
    let x0y = &data.x0 * y;
    let v = linalg::spd_sqrt(weights.r(), "R")? * &data.u0 * y;
    let inv_vt = pd_inverse_apply(&x0y, &v.transpose())?;
    Ok((weights.q() * &x0y).trace() + (&v * inv_vt).trace())
}

/// The CE reduced objective plus `eta * trace(Y (X0Y)^{-1} Y')`.
pub fn reduced_objective_rp(data: &TrajectoryData, weights: &LqrWeights, eta: f64, y: &DMatrix<f64>) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    let ce = reduced_objective_ce(data, weights, y)?;
    let x0y = &data.x0 * y;
    let inv_yt = pd_inverse_apply(&x0y, &y.transpose())?;
    Ok(ce + eta * (y * inv_yt).trace())
}

#[derive(Debug, Clone, Serialize)]
pub enum RpSlack {
    #[serde(serialize_with = "crate::report::ser_matrix")]
    Full(DMatrix<f64>),
    Epigraph(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Diagnostics {
    /// Spectral norm of `X0 Y - I`.
    pub norm_x0y_minus_i: f64,
    pub norm_x0y: f64,
    pub norm_u0y: f64,
    pub norm_x1y: f64,
    pub sigma_min_x0y: f64,
}

impl Diagnostics {
    pub fn new(data: &TrajectoryData, y: &DMatrix<f64>) -> Self {
        let x0y = &data.x0 * y;
        let n = x0y.nrows();
        Self {
            norm_x0y_minus_i: linalg::spectral_norm(&(&x0y - DMatrix::<f64>::identity(n, n))),
            norm_x0y: linalg::spectral_norm(&x0y),
            norm_u0y: linalg::spectral_norm(&(&data.u0 * y)),
            norm_x1y: linalg::spectral_norm(&(&data.x1 * y)),
            sigma_min_x0y: linalg::sigma_min(&x0y),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DddSolution {
    #[serde(serialize_with = "crate::report::ser_matrix")]
    pub y: DMatrix<f64>,
    #[serde(serialize_with = "crate::report::ser_matrix")]
    pub x: DMatrix<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<RpSlack>,
    /// `None` when `X0 Y` is numerically singular.
    #[serde(serialize_with = "crate::report::ser_opt_matrix")]
    pub k: Option<DMatrix<f64>>,
    pub objective: f64,
    pub status: SolveStatus,
    pub diagnostics: Diagnostics,
    pub eta: Option<f64>,
    pub solver: SolverSummary,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub gap: f64,
    pub feas: f64,
    pub dual_objective: f64,
    pub num_vars: usize,
    pub eliminated_vars: usize,
    pub settings: SolveSettings,
}

impl DddSolution {
    fn from_result(program: &DddProgram, data: &TrajectoryData, r: &SolveResult, settings: &SolveSettings) -> Self {
        let y = program.y_from(&r.z);
        Self {
            k: recover_gain(&data.u0, &data.x0, &y, None).ok(),
            x: program.x_from(&r.z),
            slack: program.slack_from(&r.z),
            diagnostics: Diagnostics::new(data, &y),
            y,
            objective: r.objective_value,
            status: r.status,
            eta: program.eta,
            solver: SolverSummary {
                iterations: r.iterations,
                gap: r.gap,
                feas: r.feas,
                dual_objective: r.dual_objective,
                num_vars: program.problem.num_vars(),
                eliminated_vars: r.eliminated_vars,
                settings: *settings,
            },
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Spectral norm of the recovered gain, `NaN` when recovery failed.
    pub fn norm_k(&self) -> f64 {
        self.k.as_ref().map_or(f64::NAN, linalg::spectral_norm)
    }
}

pub fn solve_program(program: &DddProgram, data: &TrajectoryData, settings: &SolveSettings) -> Result<DddSolution> {
    let r = conic::solve(program.problem(), settings)?;
    Ok(DddSolution::from_result(program, data, &r, settings))
}

pub fn solve_ce(data: &TrajectoryData, weights: &LqrWeights, settings: &SolveSettings) -> Result<DddSolution> {
    solve_program(&build_ce(data, weights)?, data, settings)
}

pub fn solve_rp(
    data: &TrajectoryData,
    weights: &LqrWeights,
    eta: f64,
    form: RpForm,
    settings: &SolveSettings,
) -> Result<DddSolution> {
    solve_program(&build_rp(data, weights, eta, form)?, data, settings)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    /// `(block name, smallest eigenvalue)`.
    pub blocks: Vec<(String, f64)>,
    pub worst: f64,
    pub feasible: bool,
}

/// Recomputes every LMI of the program at `(Y, X, slack)` from the raw data.
pub fn verify_feasibility(
    data: &TrajectoryData,
    weights: &LqrWeights,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    slack: Option<&RpSlack>,
    tol: f64,
) -> Result<FeasibilityReport> {
    check_data(data, weights)?;
    let n = data.n();
    let x0y = &data.x0 * y;
    let x1y = &data.x1 * y;
    let v = linalg::spd_sqrt(weights.r(), "R")? * &data.u0 * y;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut blocks = Vec::new();
    let b1 = linalg::vstack(&[
        &linalg::hstack(&[&(&x0y - &eye), &x1y]),
        &linalg::hstack(&[&x1y.transpose(), &x0y]),
    ]);
    blocks.push(("state".to_string(), linalg::min_eigenvalue(&b1)));
    let b2 = linalg::vstack(&[
        &linalg::hstack(&[x, &v]),
        &linalg::hstack(&[&v.transpose(), &x0y]),
    ]);
    blocks.push(("input".to_string(), linalg::min_eigenvalue(&b2)));
    match slack {
        None => {}
        Some(RpSlack::Full(s)) => {
            let b = linalg::vstack(&[&linalg::hstack(&[s, y]), &linalg::hstack(&[&y.transpose(), &x0y])]);
            blocks.push(("slack".to_string(), linalg::min_eigenvalue(&b)));
        }
        Some(RpSlack::Epigraph(t)) => {
            for (i, ti) in t.iter().enumerate() {
                let row = y.rows(i, 1).into_owned();
                let b = linalg::vstack(&[
                    &linalg::hstack(&[&DMatrix::from_element(1, 1, *ti), &row]),
                    &linalg::hstack(&[&row.transpose(), &x0y]),
                ]);
                blocks.push((format!("slack[{i}]"), linalg::min_eigenvalue(&b)));
            }
        }
    }
    let worst = blocks.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    Ok(FeasibilityReport {
        feasible: worst >= -tol,
        blocks,
        worst,
    })
}
