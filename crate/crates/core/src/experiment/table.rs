//! Multi-seed reproduction of the kernel table and the two MSE tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, IpBudget, Smoothing, Tier};
use super::run::{run, ExperimentReport};
use crate::error::{Error, Result};
use crate::gp::{kfold_kernel_select, write_kernel_table, KernelFamily, KernelScore, DEFAULT_RESTARTS};
use crate::pdes::{initial_condition, linspace, NoiseSpec, ProblemKind, ProblemSpec};
use crate::training::ColeHopfGrid;

/// One configured row of a table.
#[derive(Debug, Clone)]
pub struct RowSpec {
    pub name: &'static str,
    /// Literature value for the row.
    pub literature_mse: f64,
    /// `None` for literature-only rows that are not run.
    pub config: Option<ExperimentConfig>,
}

fn base(problem: ProblemKind, tier: Tier) -> ExperimentConfig {
    ExperimentConfig::defaults(problem, tier)
}

fn noisy(mut c: ExperimentConfig, sigma: f64) -> ExperimentConfig {
    c.noise.sigma = sigma;
    c
}

fn cpinn(mut c: ExperimentConfig, n: usize) -> ExperimentConfig {
    c.regularizers.subdomains = n;
    c
}

fn gp(mut c: ExperimentConfig) -> ExperimentConfig {
    c.smoothing = Smoothing::Gp {
        kernel: KernelFamily::Rbf,
        restarts: DEFAULT_RESTARTS,
    };
    c
}

fn sgp(mut c: ExperimentConfig, counts: Vec<usize>) -> ExperimentConfig {
    c.smoothing = Smoothing::Sgp {
        kernel: KernelFamily::Rbf,
        restarts: DEFAULT_RESTARTS,
        n0: 5,
        selection: IpBudget::Target { counts },
    };
    c
}

fn colehopf(mut c: ExperimentConfig) -> ExperimentConfig {
    c.regularizers.colehopf = Some(ColeHopfGrid::default());
    c
}

/// Row configurations of table 2 (Schrodinger) or 3 (Burgers).
pub fn table_rows(table: u8, tier: Tier) -> Result<Vec<RowSpec>> {
    let row = |name, literature_mse, config| RowSpec {
        name,
        literature_mse,
        config: Some(config),
    };
    match table {
        2 => {
            let b = base(ProblemKind::Schrodinger, tier);
            Ok(vec![
                row("PINN (no error)", 0.0105, b.clone()),
                row("PINN (sigma=0.1)", 0.0289, noisy(b.clone(), 0.1)),
                row("cPINN-2 (no error)", 0.2745, cpinn(b.clone(), 2)),
                row("cPINN-2 (sigma=0.1, no smoothing)", 0.4782, noisy(cpinn(b.clone(), 2), 0.1)),
                row("cPINN-3 (no error)", 0.0258, cpinn(b.clone(), 3)),
                row("cPINN-3 (sigma=0.1, no smoothing)", 0.4178, noisy(cpinn(b.clone(), 3), 0.1)),
                row("GP-smoothed PINN (sigma=0.1)", 0.0125, gp(noisy(b.clone(), 0.1))),
                row("SGP-smoothed PINN (sigma=0.1, 10/10 IPs)", 0.0231, sgp(noisy(b.clone(), 0.1), vec![10, 10])),
                row("SGP-smoothed PINN (sigma=0.1, 29/20 IPs)", 0.0123, sgp(noisy(b, 0.1), vec![29, 20])),
            ])
        }
        3 => {
            let b = base(ProblemKind::Burgers, tier);
            let n = |c| noisy(c, 0.5);
            Ok(vec![
                row("PINN (no error)", 0.0116, b.clone()),
                row("PINN (sigma=0.5)", 0.1982, n(b.clone())),
                row("PINN (sigma=0.5, Cole-Hopf regularizer)", 0.1125, colehopf(n(b.clone()))),
                row("cPINN-2 (no error)", 0.0161, cpinn(b.clone(), 2)),
                row("cPINN-2 (sigma=0.5, no smoothing)", 0.0834, n(cpinn(b.clone(), 2))),
                row("cPINN-2 (sigma=0.5, Cole-Hopf regularizer)", 0.0891, colehopf(n(cpinn(b.clone(), 2)))),
                row("cPINN-3 (no error)", 2.782e-5, cpinn(b.clone(), 3)),
                row("cPINN-3 (sigma=0.5, no smoothing)", 0.0854, n(cpinn(b.clone(), 3))),
                row("cPINN-3 (sigma=0.5, Cole-Hopf regularizer)", 0.0329, colehopf(n(cpinn(b.clone(), 3)))),
                RowSpec {
                    name: "UQ-PINN (sigma=0.5, literature value)",
                    literature_mse: 0.1248,
                    config: None,
                },
                row("GP-smoothed PINN (sigma=0.5)", 0.0384, gp(n(b.clone()))),
                row("SGP-smoothed PINN (sigma=0.5, 41 IPs)", 0.0080, sgp(n(b), vec![41])),
            ])
        }
        other => Err(Error::Config(format!("no MSE table {other}; tables 2 and 3 are runs, 1 is the kernel table"))),
    }
}

/// Outcome of one row over all seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowResult {
    pub name: String,
    pub literature_mse: f64,
    /// `(seed, mse)` of completed runs.
    pub mse: Vec<(u64, f64)>,
    /// Seeds whose run diverged or failed, with the reason.
    pub failed: Vec<(u64, String)>,
}

impl RowResult {
    pub fn mean_std(&self) -> Option<(f64, f64)> {
        mean_std(&self.mse.iter().map(|m| m.1).collect::<Vec<_>>())
    }
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn slug(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_string()
}

/// Runs every `(row, seed)` pair, with `workers` runs in flight at once.
/// Each run is single-threaded and seeded, so the results do not depend on
/// `workers`.
pub fn run_rows(rows: &[RowSpec], seeds: &[u64], out: Option<&Path>, workers: usize) -> Vec<RowResult> {
    let jobs: Vec<(usize, u64)> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.config.is_some())
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Mutex<Vec<Option<std::result::Result<ExperimentReport, String>>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(i, seed)) = jobs.get(j) else { break };
                let mut cfg = rows[i].config.clone().expect("filtered");
                cfg.seed = seed;
                if let Some(dir) = out {
                    cfg.output_dir = Some(dir.join(slug(rows[i].name)).join(format!("seed{seed}")));
                }
                log::info!("row {:?} seed {seed}", rows[i].name);
                let r = run(&cfg).map_err(|e| e.to_string());
                results.lock().expect("no panics while holding the lock")[j] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("no panics while holding the lock");
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = RowResult {
                name: row.name.to_string(),
                literature_mse: row.literature_mse,
                mse: Vec::new(),
                failed: Vec::new(),
            };
            for (j, &(ri, seed)) in jobs.iter().enumerate() {
                if ri != i {
                    continue;
                }
                match &results[j] {
                    Some(Ok(rep)) if !rep.diverged() => r.mse.push((seed, rep.validation_mse)),
                    Some(Ok(_)) => r.failed.push((seed, "diverged".into())),
                    Some(Err(e)) => r.failed.push((seed, e.clone())),
                    None => r.failed.push((seed, "not run".into())),
                }
            }
            r
        })
        .collect()
}

/// `row,literature_mse,mse_mean,mse_std,n_ok,n_failed,per_seed`; `per_seed` is
/// `seed:mse` joined by `;`.
pub fn write_table_csv(rows: &[RowResult], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "row,literature_mse,mse_mean,mse_std,n_ok,n_failed,per_seed")?;
    for r in rows {
        let (m, s) = r
            .mean_std()
            .map(|(m, s)| (format!("{m:e}"), format!("{s:e}")))
            .unwrap_or_default();
        let per: Vec<String> = r.mse.iter().map(|(seed, v)| format!("{seed}:{v:e}")).collect();
        writeln!(
            w,
            "\"{}\",{:e},{m},{s},{},{},{}",
            r.name,
            r.literature_mse,
            r.mse.len(),
            r.failed.len(),
            per.join(";")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Literature kernel table: `(family, train MSE, validation MSE)`.
pub const KERNEL_TABLE_LITERATURE: [(&str, f64, f64); 5] = [
    ("rbf", 0.00762, 0.0110),
    ("matern 0.1", 3.2e-8, 0.0465),
    ("matern 1.5", 0.00598, 0.0116),
    ("matern 4", 0.00588, 0.0126),
    ("rq", 0.00721, 0.0112),
];

/// Noisy `u` channel of the Schrodinger initial slice (50 points, `sigma`).
pub fn kernel_table_data(sigma: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let problem = ProblemSpec::schrodinger();
    let xs = linspace(problem.domain.x_min, problem.domain.x_max, 50);
    let samples = initial_condition(&problem, &xs, &NoiseSpec::gaussian(sigma, seed))?;
    let y = samples
        .iter()
        .map(|s| match &s.kind {
            crate::pdes::BoundaryKind::Value { target, .. } => target[0],
            crate::pdes::BoundaryKind::Periodic { .. } => unreachable!("initial samples are values"),
        })
        .collect();
    Ok((xs, y))
}

/// 10-fold kernel comparison per seed, in the input family order.
pub fn kernel_table(seeds: &[u64]) -> Result<Vec<Vec<KernelScore>>> {
    let families = KernelFamily::table_families();
    seeds
        .iter()
        .map(|&seed| {
            let (x, y) = kernel_table_data(0.1, seed)?;
            let mut scores = kfold_kernel_select(&x, &y, 10, &families, DEFAULT_RESTARTS, seed)?;
            scores.sort_by_key(|s| families.iter().position(|f| *f == s.family));
            Ok(scores)
        })
        .collect()
}

/// Seed-averaged scores in family order.
pub fn average_scores(per_seed: &[Vec<KernelScore>]) -> Vec<KernelScore> {
    (0..per_seed[0].len())
        .map(|i| {
            let n = per_seed.len() as f64;
            KernelScore {
                family: per_seed[0][i].family,
                train_mse: per_seed.iter().map(|s| s[i].train_mse).sum::<f64>() / n,
                val_mse: per_seed.iter().map(|s| s[i].val_mse).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Reproduces table 1, 2 or 3 under `out`, returning the written CSV path.
/// Tables 2 and 3 run `base_tier` configurations; rows may partially fail.
pub fn reproduce_table(table: u8, seeds: &[u64], tier: Tier, out: &Path, workers: usize) -> Result<PathBuf> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    fs::create_dir_all(out)?;
    if table == 1 {
        let per_seed = kernel_table(seeds)?;
        for (seed, scores) in seeds.iter().zip(&per_seed) {
            write_kernel_table(scores, &out.join(format!("table1_seed{seed}.csv")))?;
        }
        let path = out.join("table1.csv");
        write_kernel_table(&average_scores(&per_seed), &path)?;
        return Ok(path);
    }
    let rows = table_rows(table, tier)?;
    let results = run_rows(&rows, seeds, Some(&out.join(format!("table{table}"))), workers);
    let path = out.join(format!("table{table}.csv"));
    write_table_csv(&results, &path)?;
    Ok(path)
}
