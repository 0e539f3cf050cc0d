//! Inducing-point selection on a noisy Burgers initial slice: a threshold
//! sweep, then a fixed-count selection whose admission log is replayed.
//!
//! `cargo run --release --example inducing_points`

use pinn_gp::gp::KernelFamily;
use pinn_gp::pdes::{sample, NoiseSpec, ProblemKind, ProblemSpec, SamplingConfig};
use pinn_gp::sgp::{ip_select, ip_select_target, IpSelectConfig};

fn main() -> pinn_gp::Result<()> {
    let problem = ProblemSpec::burgers();
    let cfg = SamplingConfig::for_kind(ProblemKind::Burgers);
    let (x, channels) = sample(&problem, &cfg, &NoiseSpec::gaussian(0.5, 0))?.initial_slice();
    let y = &channels[0];

    let probe = ip_select(&x, y, &IpSelectConfig::new(5, 0.0, 0), KernelFamily::Rbf)?;
    let amplitude = probe.seed_kernel.amplitude;
    println!("seed-subset kernel: {:?}", probe.seed_kernel);
    for frac in [0.2, 0.5, 0.8, 0.95, 1.0] {
        let sel = ip_select(&x, y, &IpSelectConfig::new(x.len(), frac * amplitude, 0), KernelFamily::Rbf)?;
        println!("rho = {frac:.2} * amplitude: {} inducing points", sel.selected.len());
    }

    let sel = ip_select_target(&x, y, 20, &IpSelectConfig::new(20, 0.0, 0), KernelFamily::Rbf)?;
    if let Err(bad) = sel.verify(&x) {
        panic!("admission log does not replay: {bad:?}");
    }
    println!(
        "target 20: rho {:.4}, {} points, admission log replays cleanly",
        sel.config.rho,
        sel.selected.len()
    );
    println!("{}", serde_json::to_string_pretty(&sel.record()).expect("record serialises"));
    Ok(())
}
