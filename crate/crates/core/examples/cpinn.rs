//! Conservative PINN with the spatial domain split into equal subdomains.
//!
//! `cargo run --release --example cpinn [subdomains]`

use pinn_gp::experiment::{run, ExperimentConfig, Tier};
use pinn_gp::pdes::ProblemKind;

fn main() -> pinn_gp::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut cfg = ExperimentConfig::defaults(ProblemKind::Burgers, Tier::Fast);
    cfg.regularizers.subdomains = n;
    let report = run(&cfg)?;
    println!("{n} subdomains: validation mse {:.3e} ({:.0}s)", report.validation_mse, report.timings.total);
    let last = report.history.last().expect("history is logged");
    println!("final loss {:.3e}, interface term {:.3e}", last.loss.total, last.loss.interface);
    Ok(())
}
