//! A reduced RP sweep through the experiment harness, written to a
//! temporary directory.

use ddd_lqr_lab::experiments::{parse_config_str, run_rp_sweep, summary_to_csv, write_outputs, ExperimentKind};

fn main() -> ddd_lqr_lab::Result<()> {
    let cfg = parse_config_str(
        "preset = \"paper41\"\nT_grid = [20, 40, 80]\nn_runs = 4\nbase_seed = 2024\n",
        std::path::Path::new("inline.toml"),
    )?;
    for kind in [ExperimentKind::RpFixed, ExperimentKind::RpGrowing] {
        let out = run_rp_sweep(&cfg, kind)?;
        println!("{}", kind.id());
        print!("{}", summary_to_csv(&out.summary));
        let dir = std::env::temp_dir().join(format!("ddd-lqr-lab-{}", kind.id()));
        for f in write_outputs(&out, &cfg, &dir)? {
            println!("  wrote {}", f.display());
        }
    }
    Ok(())
}
