//! Smooths a noisy initial slice with an exact GP per channel and compares
//! the error against the clean profile before and after.
//!
//! `cargo run --release --example gp_smoothing [sigma]`

use pinn_gp::gp::{smooth_boundary, KernelFamily, DEFAULT_RESTARTS};
use pinn_gp::pdes::{sample, NoiseSpec, ProblemKind, ProblemSpec, SamplingConfig};

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

fn main() -> pinn_gp::Result<()> {
    let sigma: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let problem = ProblemSpec::schrodinger();
    let cfg = SamplingConfig::for_kind(ProblemKind::Schrodinger);
    let (x, noisy) = sample(&problem, &cfg, &NoiseSpec::gaussian(sigma, 0))?.initial_slice();
    let smoothed = smooth_boundary(&x, &noisy, KernelFamily::Rbf, DEFAULT_RESTARTS, 0)?;
    let clean: Vec<Vec<f64>> = x.iter().map(|&xi| problem.clean_initial(xi)).collect();
    for c in 0..noisy.len() {
        let truth: Vec<f64> = clean.iter().map(|v| v[c]).collect();
        let band = smoothed.std[c].iter().sum::<f64>() / x.len() as f64;
        println!(
            "channel {c}: noisy rmse {:.4}, smoothed rmse {:.4}, mean posterior std {band:.4}, kernel {:?}",
            rmse(&noisy[c], &truth),
            rmse(&smoothed.mean[c], &truth),
            smoothed.models[c].kernel
        );
    }
    Ok(())
}
