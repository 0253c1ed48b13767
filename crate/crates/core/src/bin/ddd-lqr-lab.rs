use std::path::PathBuf;
use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ddd_lqr_lab::ddd_sdp::RpForm;
use ddd_lqr_lab::experiments::{self, commands, commands::RunSpec, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "ddd-lqr-lab", version, about = "Direct data-driven LQR: Riccati reference, SDP solves and Monte Carlo sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for experiments.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base seed for experiments, trajectory seed for single runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ce,
    RpFixed,
    RpGrowing,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Epigraph,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Riccati solution and LQR gain of the configured plant.
    Dare,
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Solve the certainty-equivalence program on one trajectory.
    SolveCe {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Solve the robustness-promoting program on one trajectory.
    SolveRp {
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, value_enum, default_value_t = Form::Epigraph)]
        form: Form,
    },
    /// Persistency of excitation and data-matrix rank of one trajectory,
    /// simulated from the config or read from a CSV file.
    CheckPe {
        #[arg(long, conflicts_with = "trajectory")]
        horizon: Option<usize>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Hankel depth, `n + 1` by default.
        #[arg(long, short = 'k')]
        depth: Option<usize>,
    },
    /// Run a Monte Carlo experiment and write records, summary, plots and manifest.
    Experiment {
        #[arg(value_enum)]
        kind: Kind,
    },
}

fn load(cli: &Cli) -> ddd_lqr_lab::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => experiments::parse_config(p)?,
        None => experiments::parse_config_str("", std::path::Path::new("<defaults>"))?,
    };
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> ddd_lqr_lab::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print(v: &serde_json::Value) -> ddd_lqr_lab::Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn run(cli: &Cli) -> ddd_lqr_lab::Result<bool> {
    let mut cfg = load(cli)?;
    let run_spec = |h: Option<usize>| RunSpec::from_config(&cfg, h, cli.seed);
    match &cli.command {
        Command::Dare => print(&commands::dare(&cfg)?)?,
        Command::Simulate { horizon } => {
            let csv = commands::simulate_csv(&cfg, run_spec(*horizon))?;
            match &cfg.output_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join("trajectory.csv");
                    std::fs::write(&path, csv)?;
                    eprintln!("wrote {}", path.display());
                }
                None => emit(&csv)?,
            }
        }
        Command::SolveCe { horizon } => print(&commands::solve_ce(&cfg, run_spec(*horizon))?)?,
        Command::SolveRp { horizon, eta, form } => {
            let form = match form {
                Form::Epigraph => RpForm::Epigraph,
                Form::Full => RpForm::Full,
            };
            print(&commands::solve_rp(&cfg, run_spec(*horizon), *eta, form)?)?
        }
        Command::CheckPe {
            horizon,
            trajectory,
            depth,
        } => match trajectory {
            Some(path) => print(&commands::check_pe_csv(&std::fs::read_to_string(path)?, *depth)?)?,
            None => print(&commands::check_pe(&cfg, run_spec(*horizon), *depth)?)?,
        },
        Command::Experiment { kind } => {
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
            }
            let kind = match kind {
                Kind::Ce => ExperimentKind::Ce,
                Kind::RpFixed => ExperimentKind::RpFixed,
                Kind::RpGrowing => ExperimentKind::RpGrowing,
            };
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(format!("out-{}", kind.id())));
            let outcome = experiments::run_experiment(&cfg, kind)?;
            for f in experiments::write_outputs(&outcome, &cfg, &dir)? {
                eprintln!("wrote {}", f.display());
            }
            emit(&experiments::summary_to_csv(&outcome.summary))?;
            let failed = outcome.records.iter().filter(|r| !r.is_optimal()).count();
            if failed > 0 {
                eprintln!("{failed} of {} cells did not reach Optimal", outcome.records.len());
                return Ok(cfg.tolerate_failures);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
