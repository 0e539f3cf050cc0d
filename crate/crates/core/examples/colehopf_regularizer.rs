//! Burgers with the Cole-Hopf regularizer, which ties the network to the
//! linear heat equation satisfied by the transformed potential.
//!
//! `cargo run --release --example colehopf_regularizer`

use pinn_gp::experiment::{run, ExperimentConfig, Tier};
use pinn_gp::pdes::ProblemKind;
use pinn_gp::training::ColeHopfGrid;

fn main() -> pinn_gp::Result<()> {
    let mut cfg = ExperimentConfig::defaults(ProblemKind::Burgers, Tier::Fast);
    cfg.noise.sigma = 0.5;
    cfg.regularizers.colehopf = Some(ColeHopfGrid::default());
    let report = run(&cfg)?;
    let last = report.history.last().expect("history is logged");
    println!(
        "validation mse {:.3e}, Cole-Hopf term {:.3e} ({:.0}s)",
        report.validation_mse, last.loss.colehopf, report.timings.total
    );
    Ok(())
}
