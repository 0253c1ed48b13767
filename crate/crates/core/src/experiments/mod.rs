//! Seeded Monte Carlo harness over the CE and RP programs: per-cell records,
//! summary statistics, CSV/SVG output and a run manifest.
//!
//! Every cell `(T, run)` draws its own trajectory from
//! `cell_seed(base_seed, T, run)`, so results do not depend on the number of
//! worker threads or on scheduling. Records are sorted by
//! `(experiment_id, T, seed)` before they are emitted.

pub mod commands;
mod config;
mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{parse_config, parse_config_str, EtaPolicy, ExperimentConfig, ExperimentKind};
pub use svg::{line_chart, Series};

use crate::analytic_oracle::{ce_prediction, rp_gain_bound};
use crate::conic::SolveStatus;
use crate::ddd_sdp::{self, DddSolution, RpForm};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr_exact;
use crate::lti_lab::{simulate, LqrWeights, LtiSystem, NoiseMode, TrajectoryData};

/// Relative slack when testing `||K||^2 <= rp_bound` on solver output.
pub const BOUND_REL_TOL: f64 = 1e-6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the trajectory for horizon `t` and run index `run`.
pub fn cell_seed(base_seed: u64, t: usize, run: usize) -> u64 {
    base_seed ^ splitmix64(((t as u64) << 32) ^ run as u64)
}

/// One Monte Carlo cell. Optional fields are empty in the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub experiment_id: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    pub eta: Option<f64>,
    pub sigma_w: f64,
    /// Solver status as reported, or `Error` when the program could not be built.
    pub solver_status: String,
    pub norm_k: Option<f64>,
    #[serde(serialize_with = "crate::report::ser_opt_matrix")]
    pub k: Option<DMatrix<f64>>,
    /// `(m, n)`, fixes the K columns even when no gain was recovered.
    #[serde(skip)]
    pub gain_shape: (usize, usize),
    pub norm_x0y: Option<f64>,
    /// Kept in memory and in the summary; not a records.csv column.
    #[serde(skip)]
    pub norm_x0y_minus_i: Option<f64>,
    pub norm_u0y: Option<f64>,
    pub norm_x1y: Option<f64>,
    pub objective: Option<f64>,
    pub rp_bound: Option<f64>,
    pub sigma_min_dt: f64,
    /// Seconds spent on simulation and solve.
    pub wall_time: f64,
}

impl ExperimentRecord {
    pub fn is_optimal(&self) -> bool {
        self.solver_status == SolveStatus::Optimal.to_string()
    }

    fn new(
        experiment_id: &str,
        data: &TrajectoryData,
        eta: Option<f64>,
        solution: Result<DddSolution>,
        rp_bound: Option<f64>,
        started: Instant,
    ) -> Self {
        let (status, sol) = match solution {
            Ok(s) => (s.status.to_string(), Some(s)),
            Err(_) => ("Error".to_string(), None),
        };
        let k = sol.as_ref().and_then(|s| s.k.clone());
        let diag = sol.as_ref().map(|s| s.diagnostics);
        Self {
            experiment_id: experiment_id.to_string(),
            seed: data.seed,
            t: data.horizon,
            eta,
            sigma_w: data.sigma_w,
            solver_status: status,
            norm_k: k.as_ref().map(linalg::spectral_norm),
            k,
            gain_shape: (data.m(), data.n()),
            norm_x0y: diag.map(|d| d.norm_x0y),
            norm_x0y_minus_i: diag.map(|d| d.norm_x0y_minus_i),
            norm_u0y: diag.map(|d| d.norm_u0y),
            norm_x1y: diag.map(|d| d.norm_x1y),
            objective: sol.as_ref().map(|s| s.objective),
            rp_bound,
            sigma_min_dt: linalg::sigma_min(&data.combined_matrix()),
            wall_time: started.elapsed().as_secs_f64(),
        }
    }

    /// `||K||^2 <= rp_bound` up to [`BOUND_REL_TOL`]; `None` when either side is missing.
    pub fn bound_holds(&self) -> Option<bool> {
        let (nk, b) = (self.norm_k?, self.rp_bound?);
        Some(nk * nk <= b * (1.0 + BOUND_REL_TOL))
    }
}

/// Mean and variance of the Optimal cells at one horizon.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepPoint {
    #[serde(rename = "T")]
    pub t: usize,
    pub eta: Option<f64>,
    pub n_cells: usize,
    pub n_optimal: usize,
    pub mean_norm_k: f64,
    /// Unbiased sample variance, 0 with a single cell.
    pub var_norm_k: f64,
    pub mean_norm_x0y: f64,
    pub mean_norm_x0y_minus_i: f64,
    pub mean_norm_u0y: f64,
    pub mean_norm_x1y: f64,
    /// Optimal cells with `||K||^2 > rp_bound`.
    pub bound_violations: usize,
}

/// Outcome of one CE case (noiseless or noisy) across its runs.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CeCase {
    pub experiment_id: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub sigma_w: f64,
    pub n_cells: usize,
    pub n_optimal: usize,
    pub mean_norm_k: f64,
    /// `max ||K_ce - K_lqr||_inf` over Optimal cells.
    pub max_dev_lqr: f64,
    /// `max ||K_ce - K_predicted||_inf` over Optimal cells.
    pub max_dev_prediction: f64,
    pub min_closed_loop_rho: f64,
    pub max_closed_loop_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Summary {
    Sweep(Vec<SweepPoint>),
    Ce(Vec<CeCase>),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub kind: ExperimentKind,
    pub records: Vec<ExperimentRecord>,
    pub summary: Summary,
}

impl ExperimentOutcome {
    pub fn all_optimal(&self) -> bool {
        self.records.iter().all(ExperimentRecord::is_optimal)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn variance(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
        }
    }
}

/// Groups records by horizon; cells that are not Optimal or lack a gain are
/// counted but left out of the statistics.
pub fn summarize_sweep(records: &[ExperimentRecord]) -> Vec<SweepPoint> {
    let mut grid: Vec<usize> = records.iter().map(|r| r.t).collect();
    grid.sort_unstable();
    grid.dedup();
    grid.into_iter()
        .map(|t| {
            let cells: Vec<_> = records.iter().filter(|r| r.t == t).collect();
            let ok: Vec<_> = cells
                .iter()
                .filter(|r| r.is_optimal() && r.norm_k.is_some_and(f64::is_finite))
                .collect();
            let col = |f: fn(&ExperimentRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let nk = col(|r| r.norm_k);
            SweepPoint {
                t,
                eta: cells[0].eta,
                n_cells: cells.len(),
                n_optimal: ok.len(),
                mean_norm_k: mean(&nk),
                var_norm_k: variance(&nk),
                mean_norm_x0y: mean(&col(|r| r.norm_x0y)),
                mean_norm_x0y_minus_i: mean(&col(|r| r.norm_x0y_minus_i)),
                mean_norm_u0y: mean(&col(|r| r.norm_u0y)),
                mean_norm_x1y: mean(&col(|r| r.norm_x1y)),
                bound_violations: ok.iter().filter(|r| r.bound_holds() == Some(false)).count(),
            }
        })
        .collect()
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::param("jobs", e.to_string()))
}

fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| (&a.experiment_id, a.t, a.seed).cmp(&(&b.experiment_id, b.t, b.seed)));
}

/// RP sweep over `T_grid` (epigraph form) with the kind's eta policy.
pub fn run_rp_sweep(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentOutcome> {
    let policy = config.eta_policy_for(kind)?;
    let system = config.system(config.sigma_w)?;
    let weights = config.weights()?;
    let cells: Vec<(usize, usize)> = config
        .t_grid
        .iter()
        .flat_map(|&t| (0..config.n_runs).map(move |run| (t, run)))
        .collect();
    let mut records = pool(config.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(t, run)| {
                let started = Instant::now();
                let eta = policy.eta(t);
                let data = simulate(&system, t, cell_seed(config.base_seed, t, run), NoiseMode::Process)?;
                let sol = ddd_sdp::solve_rp(&data, &weights, eta, RpForm::Epigraph, &config.solver);
                let bound = rp_gain_bound(&data, &weights, eta).ok();
                Ok(ExperimentRecord::new(kind.id(), &data, Some(eta), sol, bound, started))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    sort_records(&mut records);
    let summary = Summary::Sweep(summarize_sweep(&records));
    Ok(ExperimentOutcome {
        kind,
        records,
        summary,
    })
}

struct CeExtra {
    dev_lqr: f64,
    dev_prediction: f64,
    rho: f64,
}

fn ce_cell(
    id: &str,
    system: &LtiSystem,
    weights: &LqrWeights,
    k_lqr: &DMatrix<f64>,
    config: &ExperimentConfig,
    run: usize,
) -> Result<(ExperimentRecord, CeExtra)> {
    let started = Instant::now();
    let t = config.ce_horizon;
    let data = simulate(system, t, cell_seed(config.base_seed, t, run), NoiseMode::Process)?;
    let sol = ddd_sdp::solve_ce(&data, weights, &config.solver);
    let pred = ce_prediction(&data, weights).ok();
    let k = sol.as_ref().ok().and_then(|s| s.k.clone());
    let extra = match &k {
        Some(k) => CeExtra {
            dev_lqr: linalg::max_abs(&(k - k_lqr)),
            dev_prediction: pred.map_or(f64::NAN, |p| linalg::max_abs(&(k - &p.k))),
            rho: lqr_exact::is_stabilizing(system, k).map_or(f64::NAN, |r| r.1),
        },
        None => CeExtra {
            dev_lqr: f64::NAN,
            dev_prediction: f64::NAN,
            rho: f64::NAN,
        },
    };
    Ok((ExperimentRecord::new(id, &data, None, sol, None, started), extra))
}

/// Noiseless and noisy CE solves at `ce_horizon`, compared with the Riccati
/// gain and with the analytic prediction.
pub fn run_ce_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let weights = config.weights()?;
    let k_lqr = lqr_exact::solve_dare_default(&config.system(0.0)?, &weights)?.k;
    let cases = [("ce-noiseless", 0.0), ("ce-noisy", config.ce_sigma_w2.sqrt())];
    let mut records = Vec::new();
    let mut summary = Vec::new();
    let pool = pool(config.jobs)?;
    for (id, sigma_w) in cases {
        let system = config.system(sigma_w)?;
        let cells = pool.install(|| {
            (0..config.n_runs)
                .into_par_iter()
                .map(|run| ce_cell(id, &system, &weights, &k_lqr, config, run))
                .collect::<Result<Vec<_>>>()
        })?;
        let ok: Vec<_> = cells.iter().filter(|(r, _)| r.is_optimal() && r.k.is_some()).collect();
        let fold = |f: fn(&CeExtra) -> f64, init: f64, op: fn(f64, f64) -> f64| {
            ok.iter().map(|(_, e)| f(e)).fold(init, op)
        };
        let nk: Vec<f64> = ok.iter().filter_map(|(r, _)| r.norm_k).collect();
        summary.push(CeCase {
            experiment_id: id.to_string(),
            t: config.ce_horizon,
            sigma_w,
            n_cells: cells.len(),
            n_optimal: ok.len(),
            mean_norm_k: mean(&nk),
            max_dev_lqr: fold(|e| e.dev_lqr, f64::NEG_INFINITY, f64::max),
            max_dev_prediction: fold(|e| e.dev_prediction, f64::NEG_INFINITY, f64::max),
            min_closed_loop_rho: fold(|e| e.rho, f64::INFINITY, f64::min),
            max_closed_loop_rho: fold(|e| e.rho, f64::NEG_INFINITY, f64::max),
        });
        records.extend(cells.into_iter().map(|(r, _)| r));
    }
    sort_records(&mut records);
    Ok(ExperimentOutcome {
        kind: ExperimentKind::Ce,
        records,
        summary: Summary::Ce(summary),
    })
}

pub fn run_experiment(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentOutcome> {
    match kind {
        ExperimentKind::Ce => run_ce_experiment(config),
        _ => run_rp_sweep(config, kind),
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => String::new(),
    }
}

/// Column names of `records.csv`, with one `K_i_j` column per gain entry.
pub fn csv_header(gain_shape: (usize, usize)) -> Vec<String> {
    let mut h: Vec<String> = ["experiment_id", "seed", "T", "eta", "sigma_w", "solver_status", "norm_K"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=gain_shape.0 {
        for j in 1..=gain_shape.1 {
            h.push(format!("K_{i}_{j}"));
        }
    }
    h.extend(
        [
            "norm_X0Y",
            "norm_U0Y",
            "norm_X1Y",
            "objective",
            "rp_bound",
            "sigma_min_DT",
            "wall_time",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

/// CSV text of the records. Without `with_wall_time` that column is left
/// empty so the file is a deterministic function of the configuration.
pub fn records_to_csv(records: &[ExperimentRecord], with_wall_time: bool) -> Result<String> {
    let first = records.first().ok_or(Error::Empty("no experiment records"))?;
    let shape = first.gain_shape;
    if records.iter().any(|r| r.gain_shape != shape) {
        return Err(Error::param("records", "records mix different gain shapes"));
    }
    let mut out = csv_header(shape).join(",");
    out.push('\n');
    for r in records {
        let mut row = vec![
            r.experiment_id.clone(),
            r.seed.to_string(),
            r.t.to_string(),
            cell(r.eta),
            r.sigma_w.to_string(),
            r.solver_status.clone(),
            cell(r.norm_k),
        ];
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                row.push(cell(r.k.as_ref().map(|k| k[(i, j)])));
            }
        }
        row.extend([
            cell(r.norm_x0y),
            cell(r.norm_u0y),
            cell(r.norm_x1y),
            cell(r.objective),
            cell(r.rp_bound),
            cell(Some(r.sigma_min_dt)),
            if with_wall_time { cell(Some(r.wall_time)) } else { String::new() },
        ]);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let text = records_to_csv(records, false)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn summary_to_csv(summary: &Summary) -> String {
    let mut out = String::new();
    match summary {
        Summary::Sweep(points) => {
            out.push_str("T,eta,n_cells,n_optimal,mean_norm_K,var_norm_K,mean_norm_X0Y,mean_norm_X0Y_minus_I,mean_norm_U0Y,mean_norm_X1Y,bound_violations\n");
            for p in points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    p.t,
                    cell(p.eta),
                    p.n_cells,
                    p.n_optimal,
                    cell(Some(p.mean_norm_k)),
                    cell(Some(p.var_norm_k)),
                    cell(Some(p.mean_norm_x0y)),
                    cell(Some(p.mean_norm_x0y_minus_i)),
                    cell(Some(p.mean_norm_u0y)),
                    cell(Some(p.mean_norm_x1y)),
                    p.bound_violations
                );
            }
        }
        Summary::Ce(cases) => {
            out.push_str("experiment_id,T,sigma_w,n_cells,n_optimal,mean_norm_K,max_dev_lqr,max_dev_prediction,min_closed_loop_rho,max_closed_loop_rho\n");
            for c in cases {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    c.experiment_id,
                    c.t,
                    c.sigma_w,
                    c.n_cells,
                    c.n_optimal,
                    cell(Some(c.mean_norm_k)),
                    cell(Some(c.max_dev_lqr)),
                    cell(Some(c.max_dev_prediction)),
                    cell(Some(c.min_closed_loop_rho)),
                    cell(Some(c.max_closed_loop_rho))
                );
            }
        }
    }
    out
}

/// `norm_K.svg` (mean with one standard deviation) and `data_norms.svg`
/// (mean norms of `X0 Y`, `X0 Y - I`, `U0 Y`, `X1 Y`) against `T`.
pub fn emit_plots(points: &[SweepPoint], dir: &Path, title: &str) -> Result<Vec<PathBuf>> {
    if points.is_empty() {
        return Err(Error::Empty("no summary points to plot"));
    }
    let gain = Series {
        name: "mean ||K||".into(),
        points: points
            .iter()
            .map(|p| (p.t as f64, p.mean_norm_k, Some(p.var_norm_k.sqrt())))
            .collect(),
    };
    let norms = [
        ("||X0 Y||", (|p: &SweepPoint| p.mean_norm_x0y) as fn(&SweepPoint) -> f64),
        ("||X0 Y - I||", |p| p.mean_norm_x0y_minus_i),
        ("||U0 Y||", |p| p.mean_norm_u0y),
        ("||X1 Y||", |p| p.mean_norm_x1y),
    ]
    .into_iter()
    .map(|(name, f)| Series {
        name: name.into(),
        points: points.iter().map(|p| (p.t as f64, f(p), None)).collect(),
    })
    .collect::<Vec<_>>();
    let files = [
        (
            dir.join("norm_K.svg"),
            line_chart(&format!("{title}: gain norm"), "T", "||K||", &[gain]),
        ),
        (
            dir.join("data_norms.svg"),
            line_chart(&format!("{title}: optimizer norms"), "T", "mean spectral norm", &norms),
        ),
    ];
    for (path, svg) in &files {
        std::fs::write(path, svg)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    crate_version: &'static str,
    rng: &'static str,
    config: &'a ExperimentConfig,
    tolerances: Tolerances,
    cells: usize,
    optimal_cells: usize,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Tolerances {
    gap_tol: f64,
    feas_tol: f64,
    max_iter: usize,
    bound_rel_tol: f64,
    dare_tol: f64,
}

/// Writes `records.csv`, `summary.csv`, `timings.csv`, the SVG plots (RP
/// sweeps only) and `run-manifest.json` into `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let records = dir.join("records.csv");
    std::fs::write(&records, records_to_csv(&outcome.records, config.record_wall_time)?)?;
    files.push(records);
    let summary = dir.join("summary.csv");
    std::fs::write(&summary, summary_to_csv(&outcome.summary))?;
    files.push(summary);

    let mut timings = String::from("experiment_id,seed,T,wall_time\n");
    for r in &outcome.records {
        let _ = writeln!(timings, "{},{},{},{}", r.experiment_id, r.seed, r.t, r.wall_time);
    }
    let tpath = dir.join("timings.csv");
    std::fs::write(&tpath, timings)?;
    files.push(tpath);

    if let Summary::Sweep(points) = &outcome.summary {
        files.extend(emit_plots(points, dir, outcome.kind.id())?);
    }

    let manifest_path = dir.join("run-manifest.json");
    let mut names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.push("run-manifest.json".into());
    let manifest = Manifest {
        experiment: outcome.kind.id(),
        crate_version: env!("CARGO_PKG_VERSION"),
        rng: "ChaCha8 seeded per cell, StandardNormal draws",
        config,
        tolerances: Tolerances {
            gap_tol: config.solver.gap_tol,
            feas_tol: config.solver.feas_tol,
            max_iter: config.solver.max_iter,
            bound_rel_tol: BOUND_REL_TOL,
            dare_tol: lqr_exact::DEFAULT_DARE_TOL,
        },
        cells: outcome.records.len(),
        optimal_cells: outcome.records.iter().filter(|r| r.is_optimal()).count(),
        files: names,
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    files.push(manifest_path);
    Ok(files)
}
