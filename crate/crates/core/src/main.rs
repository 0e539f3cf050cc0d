use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pinn_gp::experiment::{
    cached_reference, export_slices, prepare_samples, read_report, reference_cache_path, reproduce_table, run,
    ExperimentConfig, Smoothing, Tier,
};
use pinn_gp::gp::{KernelFamily, DEFAULT_RESTARTS};
use pinn_gp::Error;

#[derive(Parser)]
#[command(name = "pinn-gp", version, about = "PINN experiments with GP-smoothed boundary data")]
struct Cli {
    /// Experiment config (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run everything on one thread (outputs are bit-reproducible either way).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or load the cached reference solution.
    Reference,
    /// Run one experiment.
    Run,
    /// Reproduce table 1 (kernels), 2 (Schrodinger) or 3 (Burgers).
    Table {
        id: u8,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value = "full", value_parser = parse_tier)]
        tier: Tier,
    },
    /// Smooth the initial slice only and write the smoothed boundary CSV.
    Smooth,
    /// Run inducing-point selection on the initial slice.
    SelectIps,
    /// Write slice CSVs from a report directory.
    Export {
        /// Directory holding report.json.
        report: PathBuf,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
}

fn parse_tier(s: &str) -> Result<Tier, String> {
    match s {
        "full" => Ok(Tier::Full),
        "fast" => Ok(Tier::Fast),
        other => Err(format!("unknown tier {other:?} (full or fast)")),
    }
}

fn load_config(cli: &Cli) -> pinn_gp::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_json(&format!("{{\"schema_version\": {}}}", pinn_gp::experiment::SCHEMA_VERSION))?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> pinn_gp::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn execute(cli: &Cli) -> pinn_gp::Result<bool> {
    match &cli.command {
        Command::Reference => {
            let cfg = load_config(cli)?;
            let problem = cfg.problem_spec();
            let r = cached_reference(&problem, cfg.validation, &cfg.cache_dir)?;
            let path = reference_cache_path(&problem, cfg.validation, &cfg.cache_dir)?;
            if let Some(o) = &cli.out {
                std::fs::create_dir_all(o)?;
                r.write(&o.join("reference.csv"))?;
            }
            println!("{} ({} x {}, residual {:e})", path.display(), r.nt(), r.nx(), r.meta.convergence_residual);
        }
        Command::Run => {
            let cfg = load_config(cli)?;
            let report = run(&cfg)?;
            println!(
                "validation_mse {:e} iterations {} wall {:.1}s",
                report.validation_mse, report.iterations, report.timings.total
            );
            if let Some(u) = &report.uncertainty {
                println!("band coverage at t=0: {:.3}", u.coverage_t0);
            }
            if report.diverged() {
                eprintln!("training diverged: {:?}", report.status);
                return Ok(false);
            }
        }
        Command::Table { id, seeds, tier } => {
            let workers = if cli.deterministic {
                1
            } else {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            };
            let path = reproduce_table(*id, seeds, *tier, &out_dir(cli), workers)?;
            print!("{}", std::fs::read_to_string(&path)?);
        }
        Command::Smooth => {
            let mut cfg = load_config(cli)?;
            if cfg.smoothing == Smoothing::None {
                cfg.smoothing = Smoothing::Gp {
                    kernel: KernelFamily::Rbf,
                    restarts: DEFAULT_RESTARTS,
                };
            }
            let (_, initial, smoothing) = prepare_samples(&cfg)?;
            let s = smoothing.expect("smoothing is configured");
            let dir = out_dir(cli);
            std::fs::create_dir_all(&dir)?;
            let models = s.kernels.clone();
            pinn_gp::gp::SmoothedBoundary {
                x: initial.x.clone(),
                mean: s.mean.clone(),
                std: s.std.clone(),
                models: Vec::new(),
            }
            .write_csv(&dir.join("smoothed_boundary.csv"))?;
            write_json(&dir.join("kernels.json"), &models)?;
            for (c, sel) in s.selections.iter().enumerate() {
                write_json(&dir.join(format!("ips_{c}.json")), sel)?;
            }
            println!("wrote {}", dir.join("smoothed_boundary.csv").display());
        }
        Command::SelectIps => {
            let cfg = load_config(cli)?;
            if !matches!(cfg.smoothing, Smoothing::Sgp { .. }) {
                return Err(Error::Config("select-ips needs \"smoothing\": {\"method\": \"sgp\", ...}".into()));
            }
            let (_, _, smoothing) = prepare_samples(&cfg)?;
            let dir = out_dir(cli);
            std::fs::create_dir_all(&dir)?;
            for (c, sel) in smoothing.expect("sgp configured").selections.iter().enumerate() {
                let path = dir.join(format!("ips_{c}.json"));
                write_json(&path, sel)?;
                println!("channel {c}: {} inducing points -> {}", sel.selected.len(), path.display());
            }
        }
        Command::Export { report, times } => {
            let rep = read_report(report)?;
            let times = times.clone().unwrap_or_else(|| rep.config.timestamps.clone());
            let dir = cli.out.clone().unwrap_or_else(|| report.join("slices"));
            for p in export_slices(&rep, &times, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ Error::Divergence { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
