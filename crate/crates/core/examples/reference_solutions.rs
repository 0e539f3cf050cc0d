//! Builds both oracle reference solutions and checks them against the
//! invariants they should satisfy.
//!
//! `cargo run --release --example reference_solutions`

use pinn_gp::pdes::{burgers_exact, reference_for, trapezoid, ProblemSpec};

fn main() -> pinn_gp::Result<()> {
    let s = reference_for(&ProblemSpec::schrodinger())?;
    let dx = s.x[1] - s.x[0];
    let mass: Vec<f64> = (0..s.nt())
        .map(|it| {
            let d: Vec<f64> = (0..s.nx()).map(|ix| s.at(it, ix).iter().map(|v| v * v).sum()).collect();
            trapezoid(&d, dx, true)
        })
        .collect();
    let drift = mass.iter().map(|m| (m - mass[0]).abs() / mass[0]).fold(0.0, f64::max);
    println!(
        "schrodinger {} x {}: self-convergence {:.1e}, worst relative mass drift {drift:.1e}",
        s.nt(),
        s.nx(),
        s.meta.convergence_residual
    );

    let problem = ProblemSpec::burgers();
    let b = reference_for(&problem)?;
    let it = b.nearest_time(0.5);
    let ix = b.nx() / 3;
    let point = burgers_exact(b.x[ix], b.t[it], problem.viscosity, 1e-10)?;
    println!(
        "burgers {} x {}: self-convergence {:.1e}, u({:.3}, {:.2}) grid {:.6} pointwise {:.6}",
        b.nt(),
        b.nx(),
        b.meta.convergence_residual,
        b.x[ix],
        b.t[it],
        b.at(it, ix)[0],
        point
    );
    Ok(())
}
