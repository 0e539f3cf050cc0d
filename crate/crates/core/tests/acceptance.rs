//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Runs the fast tier by default (`PINN_GP_TIER=full` for benchmark sizes)
//! over seeds 0, 1, 2. Each experiment report is cached under the cargo
//! target tmp dir keyed by a hash of its config, so only changed configs are
//! retrained; `PINN_GP_FRESH=1` ignores the cache. The process exits 0 even
//! when criteria fail: the lines are the result.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use pinn_gp::diffnet::{forward, forward_jet, init_params, NetworkConfig};
use pinn_gp::experiment::{
    cached_reference, kernel_table, run, ExperimentConfig, ExperimentReport, IpBudget, Smoothing, Tier,
    UncertaintySchedule,
};
use pinn_gp::gp::{log_marginal_likelihood, GpModel, KernelFamily, KernelSpec, DEFAULT_RESTARTS};
use pinn_gp::pdes::{sample, trapezoid, NoiseSpec, ProblemKind, ProblemSpec, SamplingConfig, T, X};
use pinn_gp::sgp::{ip_select, IpSelectConfig};
use pinn_gp::training::{Assembly, ColeHopfGrid, ConservationGrid, LossSpec, Model, SubdomainSpec};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Harness {
    tier: Tier,
    dir: PathBuf,
    fresh: bool,
}

impl Harness {
    fn new() -> Self {
        let tier = match std::env::var("PINN_GP_TIER").as_deref() {
            Ok("full") => Tier::Full,
            _ => Tier::Fast,
        };
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        std::fs::create_dir_all(&dir).expect("cache dir");
        let fresh = std::env::var("PINN_GP_FRESH").is_ok_and(|v| v == "1");
        Self { tier, dir, fresh }
    }

    fn base(&self, problem: ProblemKind, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(problem, self.tier);
        c.seed = seed;
        c.cache_dir = self.dir.join("references");
        c
    }

    fn run(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let key = hex::encode(Sha256::digest(cfg.to_json().expect("config serialises").as_bytes()));
        let path = self.dir.join(format!("report-{}.json", &key[..20]));
        if !self.fresh {
            if let Some(r) = std::fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str(&t).ok()) {
                return r;
            }
        }
        let start = Instant::now();
        let report = run(cfg).unwrap_or_else(|e| panic!("run failed: {e}"));
        eprintln!(
            "  ran {:?} seed {} smoothing {} subdomains {} sigma {}: mse {:.4e} in {:.0}s",
            cfg.problem,
            cfg.seed,
            match &cfg.smoothing {
                Smoothing::None => "none".to_string(),
                Smoothing::Gp { .. } => "gp".into(),
                Smoothing::Sgp { selection, .. } => format!("sgp {selection:?}"),
            },
            cfg.regularizers.subdomains,
            cfg.noise.sigma,
            report.validation_mse,
            start.elapsed().as_secs_f64()
        );
        std::fs::write(&path, serde_json::to_string(&report).expect("report serialises")).expect("cache write");
        report
    }
}

/// Every run used by criteria 1-4, 6, 7 and 9 for one seed.
struct SeedRuns {
    s_clean: ExperimentReport,
    s_noisy: ExperimentReport,
    s_gp: ExperimentReport,
    s_sgp_29_20: ExperimentReport,
    s_sgp_10_10: ExperimentReport,
    s_cpinn2: ExperimentReport,
    s_conservation: ExperimentReport,
    b_clean: ExperimentReport,
    b_noisy: ExperimentReport,
    b_gp: ExperimentReport,
    b_sgp_41: ExperimentReport,
    b_cpinn3: ExperimentReport,
}

fn with_sgp(mut c: ExperimentConfig, counts: Vec<usize>) -> ExperimentConfig {
    c.smoothing = Smoothing::Sgp {
        kernel: KernelFamily::Rbf,
        restarts: DEFAULT_RESTARTS,
        n0: 5,
        selection: IpBudget::Target { counts },
    };
    c
}

fn with_gp(mut c: ExperimentConfig) -> ExperimentConfig {
    c.smoothing = Smoothing::Gp {
        kernel: KernelFamily::Rbf,
        restarts: DEFAULT_RESTARTS,
    };
    c
}

fn seed_runs(h: &Harness, seed: u64) -> SeedRuns {
    let s = h.base(ProblemKind::Schrodinger, seed);
    let mut s_noisy = s.clone();
    s_noisy.noise.sigma = 0.1;
    let mut s_gp = with_gp(s_noisy.clone());
    // band retraining: 4% of the base iterations per shifted run
    let iters = s.training.adam_steps + s.training.lbfgs_steps;
    s_gp.uncertainty = Some(UncertaintySchedule {
        adam_steps: 0,
        lbfgs_steps: iters / 25,
    });
    let mut s_cpinn2 = s.clone();
    s_cpinn2.regularizers.subdomains = 2;
    let mut s_conservation = s_noisy.clone();
    s_conservation.regularizers.conservation = Some(ConservationGrid::default());

    let b = h.base(ProblemKind::Burgers, seed);
    let mut b_noisy = b.clone();
    b_noisy.noise.sigma = 0.5;
    let mut b_cpinn3 = b.clone();
    b_cpinn3.regularizers.subdomains = 3;

    SeedRuns {
        b_clean: h.run(&b),
        b_noisy: h.run(&b_noisy),
        b_gp: h.run(&with_gp(b_noisy.clone())),
        b_sgp_41: h.run(&with_sgp(b_noisy, vec![41])),
        b_cpinn3: h.run(&b_cpinn3),
        s_clean: h.run(&s),
        s_noisy: h.run(&s_noisy),
        s_gp: h.run(&s_gp),
        s_sgp_29_20: h.run(&with_sgp(s_noisy.clone(), vec![29, 20])),
        s_sgp_10_10: h.run(&with_sgp(s_noisy, vec![10, 10])),
        s_cpinn2: h.run(&s_cpinn2),
        s_conservation: h.run(&s_conservation),
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, v: &Verdict) {
    println!("criterion {n} {}: {title} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn mse(r: &ExperimentReport) -> f64 {
    if r.diverged() {
        f64::INFINITY
    } else {
        r.validation_mse
    }
}

fn criterion_1(h: &Harness, runs: &[SeedRuns]) -> Verdict {
    let (tol, limit) = match h.tier {
        Tier::Fast => (0.05, 600.0),
        Tier::Full => (0.03, 3600.0),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        for (name, rep) in [("S", &r.s_clean), ("B", &r.b_clean)] {
            let secs = rep.timings.total;
            pass &= mse(rep) <= tol && secs <= limit;
            parts.push(format!("seed {seed} {name} {:.3e} ({secs:.0}s)", mse(rep)));
        }
    }
    Verdict {
        pass,
        detail: format!("tier {:?}, MSE <= {tol}, run <= {limit}s: {}", h.tier, parts.join(", ")),
    }
}

fn ratio_check(runs: &[SeedRuns], pick: impl Fn(&SeedRuns) -> (f64, f64), min: f64, label: &str) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        let (num, den) = pick(r);
        let ratio = num / den;
        pass &= ratio >= min;
        parts.push(format!("seed {seed} {ratio:.2}x"));
    }
    (pass, format!("{label} >= {min}x: {}", parts.join(", ")))
}

fn criterion_2(runs: &[SeedRuns]) -> Verdict {
    let (a, da) = ratio_check(runs, |r| (mse(&r.s_noisy), mse(&r.s_clean)), 2.0, "S noisy/clean");
    let (b, db) = ratio_check(runs, |r| (mse(&r.b_noisy), mse(&r.b_clean)), 5.0, "B noisy/clean");
    Verdict {
        pass: a && b,
        detail: format!("{da}; {db}"),
    }
}

/// Smoothed MSE <= 2x clean and < noisy / 2, every seed.
fn recovery(runs: &[SeedRuns], pick: impl Fn(&SeedRuns) -> (&ExperimentReport, &ExperimentReport, &ExperimentReport), label: &str) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        let (smoothed, clean, noisy) = pick(r);
        let (s, c, n) = (mse(smoothed), mse(clean), mse(noisy));
        pass &= s <= 2.0 * c && s < 0.5 * n;
        parts.push(format!("seed {seed} {s:.3e} (clean {c:.3e}, noisy {n:.3e})"));
    }
    (pass, format!("{label}: {}", parts.join(", ")))
}

fn criterion_3(runs: &[SeedRuns]) -> Verdict {
    let (a, da) = recovery(runs, |r| (&r.s_gp, &r.s_clean, &r.s_noisy), "S GP");
    let (b, db) = recovery(runs, |r| (&r.b_gp, &r.b_clean, &r.b_noisy), "B GP");
    Verdict {
        pass: a && b,
        detail: format!("{da}; {db}"),
    }
}

fn criterion_4(runs: &[SeedRuns]) -> Verdict {
    let (a, da) = recovery(runs, |r| (&r.s_sgp_29_20, &r.s_clean, &r.s_noisy), "S SGP 29/20");
    let (b, db) = recovery(runs, |r| (&r.b_sgp_41, &r.b_clean, &r.b_noisy), "B SGP 41");
    let mut worse = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        let (ten, full) = (mse(&r.s_sgp_10_10), mse(&r.s_sgp_29_20));
        worse &= ten > full;
        parts.push(format!("seed {seed} {ten:.3e} vs {full:.3e}"));
    }
    Verdict {
        pass: a && b && worse,
        detail: format!("{da}; {db}; 10/10 worse than 29/20: {}", parts.join(", ")),
    }
}

fn criterion_5() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let start = Instant::now();
        let scores = kernel_table(&[seed]).expect("kernel table").remove(0);
        let secs = start.elapsed().as_secs_f64();
        let find = |f: KernelFamily| scores.iter().find(|s| s.family == f).expect("family present");
        let (rbf, m01, rq) = (
            find(KernelFamily::Rbf),
            find(KernelFamily::Matern { nu: 0.1 }),
            find(KernelFamily::RationalQuadratic),
        );
        let ratio = m01.val_mse / rbf.val_mse;
        let spread = (rbf.val_mse - rq.val_mse).abs() / rbf.val_mse.min(rq.val_mse);
        let ok = m01.train_mse < 1e-5 && ratio > 3.0 && spread <= 0.2 && secs < 60.0;
        pass &= ok;
        parts.push(format!(
            "seed {seed} matern0.1 train {:.1e} val/rbf {ratio:.2}x, rbf-rq {:.0}%, {secs:.1}s",
            m01.train_mse,
            100.0 * spread
        ));
    }
    Verdict {
        pass,
        detail: parts.join(", "),
    }
}

fn criterion_6(runs: &[SeedRuns]) -> Verdict {
    let (a, da) = ratio_check(runs, |r| (mse(&r.s_cpinn2), mse(&r.s_clean)), 5.0, "S cPINN-2/PINN");
    let mut b = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        b &= mse(&r.b_cpinn3) <= 0.01;
        parts.push(format!("seed {seed} {:.3e}", mse(&r.b_cpinn3)));
    }
    Verdict {
        pass: a && b,
        detail: format!("{da}; B cPINN-3 <= 0.01: {}", parts.join(", ")),
    }
}

fn criterion_7(runs: &[SeedRuns]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        let (dc, du) = (r.s_conservation.conserved.model_drift(), r.s_noisy.conserved.model_drift());
        let (mc, mu) = (mse(&r.s_conservation), mse(&r.s_noisy));
        pass &= dc < du && mc <= 2.0 * mu;
        parts.push(format!("seed {seed} drift {dc:.3e} vs {du:.3e}, mse {mc:.3e} vs {mu:.3e}"));
    }
    Verdict {
        pass,
        detail: parts.join(", "),
    }
}

fn criterion_9(runs: &[SeedRuns]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        match &r.s_gp.uncertainty {
            Some(u) => {
                let cost = u.seconds / r.s_gp.timings.training;
                pass &= u.coverage_t0 >= 0.9 && cost <= 0.1;
                parts.push(format!("seed {seed} coverage {:.1}% cost {:.1}%", 100.0 * u.coverage_t0, 100.0 * cost));
            }
            None => {
                pass = false;
                parts.push(format!("seed {seed} no bands"));
            }
        }
    }
    Verdict {
        pass,
        detail: parts.join(", "),
    }
}

// ---- criterion 8: property suite ----

fn check(ok: bool, what: &str, failures: &mut Vec<String>) {
    if !ok {
        failures.push(what.to_string());
    }
}

fn jets_and_gradients(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..20 {
        let cfg = NetworkConfig::new(2, 2, 3, 10).unwrap();
        let p = init_params(&cfg, trial);
        let pt = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let jet = forward_jet(&p, &cfg, &pt, &[X, T]).unwrap();
        let h = 1e-4;
        for input in [X, T] {
            let mut a = pt;
            let mut b = pt;
            a[input] += h;
            b[input] -= h;
            let (fa, fb, f0) = (forward(&p, &cfg, &a).unwrap(), forward(&p, &cfg, &b).unwrap(), forward(&p, &cfg, &pt).unwrap());
            for o in 0..2 {
                let d1 = (fa[o] - fb[o]) / (2.0 * h);
                let d2 = (fa[o] - 2.0 * f0[o] + fb[o]) / (h * h);
                check((jet.d1(o, input) - d1).abs() <= 1e-6 * d1.abs().max(1.0), "jet first derivative", failures);
                check((jet.d2(o, input) - d2).abs() <= 1e-4 * d2.abs().max(1.0), "jet second derivative", failures);
            }
        }
    }
    for (problem, spec, cuts) in [
        (
            ProblemSpec::burgers(),
            LossSpec {
                colehopf: Some(ColeHopfGrid { nx: 9, nt: 7 }),
                ..LossSpec::default()
            },
            vec![-0.3, 0.4],
        ),
        (
            ProblemSpec::schrodinger(),
            LossSpec {
                conservation: Some(ConservationGrid { slices: 4, points: 9, per_point_square: false }),
                ..LossSpec::default()
            },
            vec![0.5],
        ),
    ] {
        let samples = sample(
            &problem,
            &SamplingConfig { n_initial: 12, n_boundary_times: 6, n_collocation: 40, seed: 3 },
            &NoiseSpec::gaussian(0.2, 1),
        )
        .unwrap();
        let net = NetworkConfig::new(2, problem.outputs(), 2, 8).unwrap();
        let model = Model::init(&problem, &net, &SubdomainSpec { cuts }, 5).unwrap();
        let asm = Assembly::new(&problem, &samples, &spec, &model.configs, &model.cuts).unwrap();
        let theta = model.flat();
        let (_, grad) = asm.evaluate(&theta, true).unwrap();
        let h = 1e-6;
        for i in (0..theta.len()).step_by(7) {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (asm.evaluate(&a, false).unwrap().0.total - asm.evaluate(&b, false).unwrap().0.total) / (2.0 * h);
            check((grad[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "composite loss gradient", failures);
        }
    }
}

fn gp_properties(failures: &mut Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let x: Vec<f64> = (0..10).map(|i| 1.1 * i as f64 + rng.random_range(0.0..0.1)).collect();
        let y: Vec<f64> = x.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let m = GpModel::new(KernelSpec::rbf(1.0, 1.0, 1e-14), x.clone(), y.clone()).unwrap();
        let err = m.predict_mean(&x).iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(err <= 1e-8, "GP noiseless interpolation", failures);

        let spec = KernelSpec::rbf(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.01..0.2));
        let p = spec.log_params();
        let (_, grad) = log_marginal_likelihood(&spec, &x, &y).unwrap();
        let h = 2e-3;
        let at = |i: usize, d: f64| {
            let mut q = p.clone();
            q[i] += d;
            log_marginal_likelihood(&KernelSpec::from_log_params(KernelFamily::Rbf, &q), &x, &y).unwrap().0
        };
        for i in 0..p.len() {
            let fd = (8.0 * (at(i, h) - at(i, -h)) - (at(i, 2.0 * h) - at(i, -2.0 * h))) / (12.0 * h);
            check((grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "LML gradient", failures);
        }
    }
}

fn reference_properties(h: &Harness, failures: &mut Vec<String>) {
    for kind in [ProblemKind::Schrodinger, ProblemKind::Burgers] {
        let cfg = h.base(kind, 0);
        let r = cached_reference(&cfg.problem_spec(), cfg.validation, &cfg.cache_dir).unwrap();
        check(r.meta.convergence_residual <= 1e-6, "reference self-convergence", failures);
        if kind == ProblemKind::Schrodinger {
            let dx = r.x[1] - r.x[0];
            let mass = |it: usize| {
                let d: Vec<f64> = (0..r.nx()).map(|ix| r.at(it, ix).iter().map(|v| v * v).sum()).collect();
                trapezoid(&d, dx, true)
            };
            let m0 = mass(0);
            let worst = (0..r.nt()).map(|it| (mass(it) - m0).abs() / m0).fold(0.0, f64::max);
            check(worst <= 1e-3, "reference C1 conservation", failures);
        }
    }
}

fn instance(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(15..60);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    x.sort_by(f64::total_cmp);
    let sigma = rng.random_range(0.01..0.3);
    let y = x.iter().map(|v| 2.0 / v.cosh() + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    (x, y)
}

fn selection_properties(failures: &mut Vec<String>) {
    let cfg = |budget, rho, seed| IpSelectConfig { restarts: 2, ..IpSelectConfig::new(budget, rho, seed) };
    for seed in 0..100 {
        let (x, y) = instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let budget = rng.random_range(5..=x.len());
        let probe = ip_select(&x, &y, &cfg(5, 0.0, seed), KernelFamily::Rbf).unwrap();
        let rho = rng.random_range(0.0..1.2) * probe.seed_kernel.amplitude;
        let s = ip_select(&x, &y, &cfg(budget, rho, seed), KernelFamily::Rbf).unwrap();
        check(s.verify(&x).is_ok() && s.selected.len() <= budget, "admission replay", failures);
    }
    for seed in 0..20 {
        let (x, y) = instance(500 + seed);
        let a = ip_select(&x, &y, &cfg(5, 0.0, seed), KernelFamily::Rbf).unwrap().seed_kernel.amplitude;
        let mut last = 0;
        for k in 0..=24 {
            let n = ip_select(&x, &y, &cfg(x.len(), a * k as f64 / 20.0, seed), KernelFamily::Rbf)
                .unwrap()
                .selected
                .len();
            check(n >= last, "rho monotonicity", failures);
            last = n;
        }
    }
}

fn criterion_8(h: &Harness) -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    jets_and_gradients(&mut failures);
    gp_properties(&mut failures);
    reference_properties(h, &mut failures);
    selection_properties(&mut failures);
    let secs = start.elapsed().as_secs_f64();
    failures.dedup();
    Verdict {
        pass: failures.is_empty() && secs <= 300.0,
        detail: if failures.is_empty() {
            format!("jets, loss gradients, GP, oracles, IP selection all hold ({secs:.1}s)")
        } else {
            format!("failed: {} ({secs:.1}s)", failures.join(", "))
        },
    }
}

fn main() {
    let h = Harness::new();
    eprintln!("acceptance: tier {:?}, cache {}", h.tier, h.dir.display());
    let runs: Vec<SeedRuns> = SEEDS.iter().map(|&s| seed_runs(&h, s)).collect();
    report(1, "clean-data benchmarks", &criterion_1(&h, &runs));
    report(2, "noisy boundary data propagates error", &criterion_2(&runs));
    report(3, "GP smoothing recovers accuracy", &criterion_3(&runs));
    report(4, "sparse GP parity and IP-count degradation", &criterion_4(&runs));
    report(5, "kernel cross-validation ordering", &criterion_5());
    report(6, "subdomain pathology and three-subdomain Burgers", &criterion_6(&runs));
    report(7, "conservation regularizer reduces drift", &criterion_7(&runs));
    report(8, "property suite", &criterion_8(&h));
    report(9, "uncertainty bands", &criterion_9(&runs));
}
