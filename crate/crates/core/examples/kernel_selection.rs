//! Ten-fold cross-validation of the five kernel families on the noisy
//! Schrodinger initial profile.
//!
//! `cargo run --release --example kernel_selection [seeds]`

use pinn_gp::experiment::{average_scores, kernel_table, KERNEL_TABLE_LITERATURE};

fn main() -> pinn_gp::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let seeds: Vec<u64> = (0..n).collect();
    let scores = average_scores(&kernel_table(&seeds)?);
    println!("{:<28} {:>10} {:>10}   literature (train, val)", "kernel", "train", "val");
    for (s, (name, train, val)) in scores.iter().zip(KERNEL_TABLE_LITERATURE) {
        println!(
            "{name:<28} {:>10.2e} {:>10.2e}   ({train:.2e}, {val:.2e})",
            s.train_mse,
            s.val_mse
        );
    }
    Ok(())
}
