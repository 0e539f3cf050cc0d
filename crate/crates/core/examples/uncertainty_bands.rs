//! GP-smoothed Schrodinger run with the two shifted retrainings that give
//! the uncertainty band, written out as plot-ready slices.
//!
//! `cargo run --release --example uncertainty_bands [out_dir]`

use std::path::PathBuf;

use pinn_gp::experiment::{run, ExperimentConfig, Smoothing, Tier, UncertaintySchedule};
use pinn_gp::gp::{KernelFamily, DEFAULT_RESTARTS};
use pinn_gp::pdes::ProblemKind;

fn main() -> pinn_gp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("bands-out"));
    let mut cfg = ExperimentConfig::defaults(ProblemKind::Schrodinger, Tier::Fast);
    cfg.noise.sigma = 0.1;
    cfg.training.lbfgs_steps = 2500;
    cfg.smoothing = Smoothing::Gp {
        kernel: KernelFamily::Rbf,
        restarts: DEFAULT_RESTARTS,
    };
    cfg.uncertainty = Some(UncertaintySchedule {
        adam_steps: 0,
        lbfgs_steps: 120,
    });
    cfg.output_dir = Some(out.clone());
    let report = run(&cfg)?;
    let u = report.uncertainty.as_ref().expect("bands were requested");
    println!(
        "mse {:.3e}; band covers {:.1}% of the t=0 reference; retraining took {:.0}s of {:.0}s",
        report.validation_mse,
        100.0 * u.coverage_t0,
        u.seconds,
        report.timings.total
    );
    println!("slices written to {}", out.join("slices").display());
    Ok(())
}
