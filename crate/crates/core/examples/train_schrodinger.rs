//! Trains a single PINN on the Schrodinger problem with the library API
//! directly (no experiment config) and prints the loss history.
//!
//! `cargo run --release --example train_schrodinger [iterations]`

use pinn_gp::diffnet::NetworkConfig;
use pinn_gp::pdes::{reference_for, sample, NoiseSpec, ProblemKind, ProblemSpec, SamplingConfig};
use pinn_gp::training::{train, LossSpec, SubdomainSpec, Task, TrainConfig};

fn main() -> pinn_gp::Result<()> {
    let lbfgs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let problem = ProblemSpec::schrodinger();
    let reference = reference_for(&problem)?;
    let mut sampling = SamplingConfig::for_kind(ProblemKind::Schrodinger);
    sampling.n_collocation = 3000;
    let samples = sample(&problem, &sampling, &NoiseSpec::clean())?;
    let loss = LossSpec::default();
    let task = Task {
        problem: &problem,
        samples: &samples,
        loss: &loss,
        reference: Some(&reference),
    };
    let net = NetworkConfig::new(2, 2, 4, 24)?;
    let cfg = TrainConfig {
        adam_steps: 500,
        lbfgs_steps: lbfgs,
        log_every: 250,
        ..TrainConfig::default()
    };
    let trained = train(&task, &net, &SubdomainSpec::single(), &cfg)?;
    for row in &trained.history {
        println!(
            "{:>6} loss {:.3e} (bc {:.2e}, pde {:.2e}) mse {:.3e}",
            row.iter,
            row.loss.total,
            row.loss.bc,
            row.loss.pde,
            row.mse_validation.unwrap_or(f64::NAN)
        );
    }
    println!("{} iterations in {:.0}s", trained.iterations, trained.wall_seconds);
    Ok(())
}
