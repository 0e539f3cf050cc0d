//! Noisy Schrodinger run with and without the conservation regularizer,
//! comparing how far the model's mass drifts over time.
//!
//! `cargo run --release --example conservation_regularizer`

use pinn_gp::experiment::{run, ExperimentConfig, Tier};
use pinn_gp::pdes::ProblemKind;
use pinn_gp::training::ConservationGrid;

fn main() -> pinn_gp::Result<()> {
    for conservation in [None, Some(ConservationGrid::default())] {
        let mut cfg = ExperimentConfig::defaults(ProblemKind::Schrodinger, Tier::Fast);
        cfg.noise.sigma = 0.1;
        cfg.training.lbfgs_steps = 2500;
        cfg.regularizers.conservation = conservation;
        let report = run(&cfg)?;
        println!(
            "conservation {}: mse {:.3e}, mass drift {:.3e}",
            if conservation.is_some() { "on " } else { "off" },
            report.validation_mse,
            report.conserved.model_drift()
        );
    }
    Ok(())
}
