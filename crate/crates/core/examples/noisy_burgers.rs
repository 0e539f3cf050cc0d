//! Clean versus noisy initial data on Burgers through the experiment driver.
//!
//! `cargo run --release --example noisy_burgers`

use pinn_gp::experiment::{run, ExperimentConfig, Tier};
use pinn_gp::pdes::ProblemKind;

fn main() -> pinn_gp::Result<()> {
    for sigma in [0.0, 0.5] {
        let mut cfg = ExperimentConfig::defaults(ProblemKind::Burgers, Tier::Fast);
        cfg.noise.sigma = sigma;
        let report = run(&cfg)?;
        println!(
            "sigma {sigma}: validation mse {:.3e} after {} iterations ({:.0}s)",
            report.validation_mse, report.iterations, report.timings.total
        );
    }
    Ok(())
}
