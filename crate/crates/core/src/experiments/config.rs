//! TOML experiment configuration.
//!
//! ```toml
//! preset = "paper41"            # or a [system] table, see below
//! T_grid = [25, 50, 100, 200]
//! sigma_w = 1.0
//! n_runs = 10
//! base_seed = 7
//! eta_policy = { linear = 10.0 } # or { fixed = 1.0 }
//!
//! [solver]
//! gap_tol = 1e-8
//! ```
//!
//! A custom plant replaces `preset`:
//!
//! ```toml
//! [system]
//! A = [[1.01, 0.01], [0.01, 1.01]]
//! B = [[1.0], [0.0]]
//! sigma_u = 1.0
//! sigma_x0 = 0.0
//! sigma_delta = 0.0
//!
//! [weights]                       # or weights = "paperQR"
//! Q = [[1.0, 0.0], [0.0, 1.0]]
//! R = [[1.0]]
//! ```
//!
//! Lowercase `a`, `b`, `q`, `r` are accepted as aliases. `sigma_w` stays at
//! the top level because the experiments set it per case. `noise_mode =
//! "measurement"` makes the single-run commands observe noisy states
//! (`sigma_delta`) of noise-free dynamics.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conic::SolveSettings;
use crate::error::{Error, Result};
use crate::lti_lab::{LqrWeights, LtiSystem, NoiseMode};
use crate::report;

/// Regularization weight as a function of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EtaPolicy {
    Fixed(f64),
    /// `eta = slope * T`.
    Linear(f64),
}

impl EtaPolicy {
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            EtaPolicy::Fixed(v) => v,
            EtaPolicy::Linear(slope) => slope * t as f64,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let v = match *self {
            EtaPolicy::Fixed(v) | EtaPolicy::Linear(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(format!("eta_policy value must be positive and finite, got {v}"))
        }
    }
}

/// Which Monte Carlo study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Noiseless and low-noise CE solves at one horizon.
    Ce,
    /// RP sweep over `T_grid` with a constant `eta`.
    RpFixed,
    /// RP sweep with `eta` growing linearly in `T`.
    RpGrowing,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Ce => "ce",
            ExperimentKind::RpFixed => "rp-fixed",
            ExperimentKind::RpGrowing => "rp-growing",
        }
    }

    /// Policy used when the config does not name one.
    pub fn default_eta_policy(self) -> Option<EtaPolicy> {
        match self {
            ExperimentKind::Ce => None,
            ExperimentKind::RpFixed => Some(EtaPolicy::Fixed(1.0)),
            ExperimentKind::RpGrowing => Some(EtaPolicy::Linear(10.0)),
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(ExperimentKind::Ce),
            "rp-fixed" => Ok(ExperimentKind::RpFixed),
            "rp-growing" => Ok(ExperimentKind::RpGrowing),
            other => Err(Error::param(
                "experiment",
                format!("unknown experiment `{other}`, expected ce, rp-fixed or rp-growing"),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "A", alias = "a")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B", alias = "b")]
    b: Vec<Vec<f64>>,
    #[serde(default = "one")]
    sigma_u: f64,
    #[serde(default)]
    sigma_x0: f64,
    #[serde(default)]
    sigma_delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawWeights {
    Preset(String),
    Matrices {
        #[serde(rename = "Q", alias = "q")]
        q: Vec<Vec<f64>>,
        #[serde(rename = "R", alias = "r")]
        r: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCe {
    #[serde(default = "default_ce_horizon")]
    horizon: usize,
    #[serde(default = "default_ce_sigma_w2")]
    sigma_w2: f64,
}

impl Default for RawCe {
    fn default() -> Self {
        Self {
            horizon: default_ce_horizon(),
            sigma_w2: default_ce_sigma_w2(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    system: Option<RawSystem>,
    weights: Option<RawWeights>,
    #[serde(rename = "T_grid", default = "default_grid")]
    t_grid: Vec<usize>,
    eta_policy: Option<EtaPolicy>,
    #[serde(default = "one")]
    sigma_w: f64,
    #[serde(default)]
    noise_mode: NoiseMode,
    #[serde(default = "default_runs")]
    n_runs: usize,
    #[serde(default)]
    base_seed: u64,
    #[serde(default)]
    solver: SolveSettings,
    output_dir: Option<PathBuf>,
    jobs: Option<usize>,
    #[serde(default)]
    ce: RawCe,
    #[serde(default)]
    tolerate_failures: bool,
    #[serde(default)]
    record_wall_time: bool,
}

fn one() -> f64 {
    1.0
}

fn default_grid() -> Vec<usize> {
    vec![25, 50, 100, 200]
}

fn default_runs() -> usize {
    10
}

fn default_ce_horizon() -> usize {
    50
}

fn default_ce_sigma_w2() -> f64 {
    1e-5
}

/// Validated configuration with defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub system_label: String,
    #[serde(serialize_with = "report::ser_matrix")]
    pub a: DMatrix<f64>,
    #[serde(serialize_with = "report::ser_matrix")]
    pub b: DMatrix<f64>,
    pub sigma_u: f64,
    pub sigma_x0: f64,
    pub sigma_delta: f64,
    #[serde(serialize_with = "report::ser_matrix")]
    pub q: DMatrix<f64>,
    #[serde(serialize_with = "report::ser_matrix")]
    pub r: DMatrix<f64>,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<usize>,
    pub eta_policy: Option<EtaPolicy>,
    pub sigma_w: f64,
    /// Noise model of the single-run commands; experiments always use
    /// process noise.
    pub noise_mode: NoiseMode,
    pub n_runs: usize,
    pub base_seed: u64,
    pub solver: SolveSettings,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub ce_horizon: usize,
    pub ce_sigma_w2: f64,
    /// Exit successfully even when some cells are not Optimal.
    pub tolerate_failures: bool,
    /// Fill the `wall_time` column of `records.csv`; this makes the file
    /// differ between otherwise identical runs.
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// The plant with the given process-noise scale.
    pub fn system(&self, sigma_w: f64) -> Result<LtiSystem> {
        LtiSystem::new(self.a.clone(), self.b.clone())?.with_noise(self.sigma_u, sigma_w, self.sigma_x0, self.sigma_delta)
    }

    pub fn weights(&self) -> Result<LqrWeights> {
        LqrWeights::new(self.q.clone(), self.r.clone())
    }

    /// `eta` at horizon `t`, resolving the kind's default policy.
    pub fn eta_policy_for(&self, kind: ExperimentKind) -> Result<EtaPolicy> {
        match (self.eta_policy, kind.default_eta_policy()) {
            (_, None) => Err(Error::param("experiment", "the CE experiment has no eta")),
            (None, Some(p)) => Ok(p),
            (Some(p @ EtaPolicy::Fixed(_)), Some(EtaPolicy::Fixed(_)))
            | (Some(p @ EtaPolicy::Linear(_)), Some(EtaPolicy::Linear(_))) => Ok(p),
            (Some(p), Some(_)) => Err(Error::param(
                "eta_policy",
                format!("{p:?} does not match experiment {}", kind.id()),
            )),
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> std::result::Result<DMatrix<f64>, String> {
    report::rows_to_matrix(rows).ok_or_else(|| format!("`{what}` must be a nonempty rectangular array of rows"))
}

fn resolve(raw: RawConfig) -> std::result::Result<ExperimentConfig, String> {
    let (label, system) = match (raw.preset.as_deref(), raw.system) {
        (Some(_), Some(_)) => return Err("give either `preset` or `[system]`, not both".into()),
        (None | Some("paper41"), None) => ("paper41".to_string(), LtiSystem::paper41()),
        (Some("paper41-printed"), None) => ("paper41-printed".to_string(), LtiSystem::paper41_printed()),
        (Some(p), None) => return Err(format!("unknown preset `{p}`, expected paper41 or paper41-printed")),
        (None, Some(s)) => {
            let a = matrix(&s.a, "system.A")?;
            let b = matrix(&s.b, "system.B")?;
            let sys = LtiSystem::new(a, b)
                .and_then(|sys| sys.with_noise(s.sigma_u, 0.0, s.sigma_x0, s.sigma_delta))
                .map_err(|e| e.to_string())?;
            ("custom".to_string(), sys)
        }
    };
    let weights = match raw.weights {
        None => LqrWeights::identity(system.n(), system.m()),
        Some(RawWeights::Preset(p)) if p == "paperQR" => LqrWeights::identity(system.n(), system.m()),
        Some(RawWeights::Preset(p)) => return Err(format!("unknown weights preset `{p}`, expected paperQR")),
        Some(RawWeights::Matrices { q, r }) => {
            LqrWeights::new(matrix(&q, "weights.Q")?, matrix(&r, "weights.R")?).map_err(|e| e.to_string())?
        }
    };
    weights.check_dims(&system).map_err(|e| e.to_string())?;

    if raw.t_grid.is_empty() {
        return Err("`T_grid` must not be empty".into());
    }
    if raw.t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("`T_grid` must be strictly increasing, got {:?}", raw.t_grid));
    }
    if raw.t_grid[0] == 0 {
        return Err("`T_grid` entries must be positive".into());
    }
    if raw.n_runs == 0 {
        return Err("`n_runs` must be at least 1".into());
    }
    if !(raw.sigma_w >= 0.0) || !raw.sigma_w.is_finite() {
        return Err(format!("`sigma_w` must be finite and >= 0, got {}", raw.sigma_w));
    }
    if let Some(p) = &raw.eta_policy {
        p.validate()?;
    }
    if raw.jobs == Some(0) {
        return Err("`jobs` must be at least 1".into());
    }
    if raw.ce.horizon == 0 {
        return Err("`ce.horizon` must be positive".into());
    }
    if !(raw.ce.sigma_w2 >= 0.0) || !raw.ce.sigma_w2.is_finite() {
        return Err(format!("`ce.sigma_w2` must be finite and >= 0, got {}", raw.ce.sigma_w2));
    }
    let s = raw.solver;
    if !(s.gap_tol > 0.0 && s.feas_tol > 0.0 && s.max_iter > 0) {
        return Err("`solver` tolerances must be positive and max_iter >= 1".into());
    }

    Ok(ExperimentConfig {
        system_label: label,
        a: system.a().clone(),
        b: system.b().clone(),
        sigma_u: system.sigma_u,
        sigma_x0: system.sigma_x0,
        sigma_delta: system.sigma_delta,
        q: weights.q().clone(),
        r: weights.r().clone(),
        t_grid: raw.t_grid,
        eta_policy: raw.eta_policy,
        sigma_w: raw.sigma_w,
        noise_mode: raw.noise_mode,
        n_runs: raw.n_runs,
        base_seed: raw.base_seed,
        solver: s,
        output_dir: raw.output_dir,
        jobs: raw.jobs,
        ce_horizon: raw.ce.horizon,
        ce_sigma_w2: raw.ce.sigma_w2,
        tolerate_failures: raw.tolerate_failures,
        record_wall_time: raw.record_wall_time,
    })
}

/// Parses configuration text; `origin` only labels error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let err = |message: String| Error::Config {
        path: origin.to_path_buf(),
        message,
    };
    let raw: RawConfig = toml::from_str(text).map_err(|e| err(e.to_string()))?;
    resolve(raw).map_err(err)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, Path::new("test.toml"))
    }

    #[test]
    fn defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.system_label, "paper41");
        assert_eq!(c.n_runs, 10);
        assert_eq!(c.t_grid, vec![25, 50, 100, 200]);
        assert_eq!(c.q, DMatrix::identity(2, 2));
        assert_eq!(c.r, DMatrix::identity(1, 1));
        assert_eq!(c.solver, SolveSettings::default());
        assert_eq!(c.eta_policy_for(ExperimentKind::RpGrowing).unwrap(), EtaPolicy::Linear(10.0));
    }

    #[test]
    fn explicit_values() {
        let c = parse(
            "preset = \"paper41-printed\"\nT_grid = [10, 20]\nn_runs = 3\nbase_seed = 9\n\
             eta_policy = { fixed = 2.5 }\n[solver]\nmax_iter = 50\n",
        )
        .unwrap();
        assert_eq!(c.b[(1, 0)], 0.3726);
        assert_eq!(c.solver.max_iter, 50);
        assert_eq!(c.solver.gap_tol, 1e-8);
        assert_eq!(c.eta_policy_for(ExperimentKind::RpFixed).unwrap().eta(10), 2.5);
        assert!(c.eta_policy_for(ExperimentKind::RpGrowing).is_err());
    }

    #[test]
    fn custom_system() {
        let c = parse("[system]\nA = [[0.5]]\nB = [[1.0]]\nsigma_x0 = 0.3\n[weights]\nQ = [[2.0]]\nR = [[3.0]]\n").unwrap();
        assert_eq!(c.system_label, "custom");
        assert_eq!(c.weights().unwrap().r()[(0, 0)], 3.0);
        assert_eq!(c.system(0.1).unwrap().sigma_x0, 0.3);
        assert_eq!(c.noise_mode, NoiseMode::Process);
        assert_eq!(parse("noise_mode = \"measurement\"").unwrap().noise_mode, NoiseMode::Measurement);
        let lower = parse("[system]\na = [[0.5]]\nb = [[1.0]]\n[weights]\nq = [[2.0]]\nr = [[3.0]]\n").unwrap();
        assert_eq!(lower.a, c.a);
        assert_eq!(lower.q, c.q);
    }

    #[test]
    fn rejections() {
        for bad in [
            "T_grid = [50, 25]",
            "T_grid = [25, 25]",
            "n_runs = 0",
            "unknown_key = 1",
            "preset = \"nope\"",
            "[solver]\nbogus = 1",
            "eta_policy = { fixed = -1.0 }",
            "preset = \"paper41\"\n[system]\na = [[1.0]]\nb = [[1.0]]",
            "[system]\na = [[1.0, 0.0]]\nb = [[1.0]]",
            "[system]\nA = [[1.0]]\nB = [[1.0]]\nsigma_delta = -1.0",
        ] {
            assert!(parse(bad).is_err(), "accepted: {bad}");
        }
        let e = parse("n_runs = \"ten\"").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }
}
