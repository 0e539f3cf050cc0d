//! GP kernels, likelihood and prediction against closed forms, dense
//! solves and finite differences.

use std::f64::consts::PI;

use pinn_gp::gp::{
    bessel_k, factor_with_jitter, fit, gram, kfold_indices, kfold_kernel_select,
    log_marginal_likelihood, matern_bessel, smooth_boundary, write_kernel_table, GpModel,
    KernelBase, KernelFamily, KernelSpec,
};
use pinn_gp::pdes::{initial_condition, linspace, BoundaryKind, NoiseSpec, ProblemSpec};
use proptest::prelude::*;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn matern(nu: f64, a: f64, l: f64, noise: f64) -> KernelSpec {
    KernelSpec {
        base: KernelBase::Matern { nu },
        amplitude: a,
        lengthscale: l,
        noise,
    }
}

fn rq(alpha: f64, a: f64, l: f64, noise: f64) -> KernelSpec {
    KernelSpec {
        base: KernelBase::RationalQuadratic { alpha },
        amplitude: a,
        lengthscale: l,
        noise,
    }
}

/// Noisy initial slice of the Schrodinger problem, one vector per channel.
fn schrodinger_slice(sigma: f64, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let xs = linspace(-5.0, 5.0, 50);
    let noise = if sigma > 0.0 { NoiseSpec::gaussian(sigma, seed) } else { NoiseSpec::clean() };
    let ic = initial_condition(&ProblemSpec::schrodinger(), &xs, &noise).unwrap();
    let mut ch = vec![Vec::new(), Vec::new()];
    for b in ic {
        let BoundaryKind::Value { target, .. } = b.kind else { unreachable!() };
        ch[0].push(target[0]);
        ch[1].push(target[1]);
    }
    (xs, ch)
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

#[test]
fn bessel_k_matches_frozen_values() {
    // reference values from an independent double-precision implementation
    let cases = [
        (0.1, 0.01, 4.934666009755597),
        (0.1, 0.5, 0.9300865291314784),
        (0.1, 1.9, 0.12912526780729525),
        (0.1, 2.1, 0.100984315247517),
        (0.1, 7.0, 0.00042508033892767026),
        (0.9, 0.3, 2.6465344452414277),
        (0.9, 3.0, 0.039070273746793095),
        (4.0, 0.2, 29900.249178224065),
        (4.0, 1.0, 44.23241584706284),
        (4.0, 10.0, 3.786143716089198e-05),
        (3.0, 2.5, 0.26822714639344925),
        (0.0, 1.0, 0.42102443824070834),
        (1.0, 1.0, 0.6019072301972346),
        (0.5, 30.0, 2.1412375659560114e-14),
        (2.7, 0.05, 16338.512785968012),
    ];
    for (nu, x, want) in cases {
        let got = bessel_k(nu, x);
        assert!((got / want - 1.0).abs() < 1e-12, "K_{nu}({x}) = {got}, want {want}");
    }
}

#[test]
fn general_matern_agrees_with_half_integer_closed_forms() {
    for i in 1..200 {
        let s = i as f64 * 0.03;
        let z1 = 3f64.sqrt() * s;
        let z2 = 5f64.sqrt() * s;
        let closed = [
            (0.5, (-s).exp()),
            (1.5, (1.0 + z1) * (-z1).exp()),
            (2.5, (1.0 + z2 + z2 * z2 / 3.0) * (-z2).exp()),
        ];
        for (nu, want) in closed {
            let got = matern_bessel(nu, s);
            assert!((got - want).abs() < 1e-10, "nu = {nu}, s = {s}: {got} vs {want}");
        }
    }
}

#[test]
fn kernel_eval_examples() {
    let k = KernelSpec::rbf(1.7, 0.4, 0.03);
    assert!((k.eval(0.2, 0.2, true) - 1.73).abs() < 1e-15);
    assert!((k.eval(0.2, 0.2, false) - 1.7).abs() < 1e-15);
    let r = 0.4 * 2f64.sqrt();
    assert!((k.eval(0.0, r, false) - 1.7 * (-1.0f64).exp()).abs() < 1e-15);

    let m = matern(1.5, 0.8, 0.6, 0.0);
    let closed = 0.8 * (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
    assert!((m.eval(1.0, 1.6, false) - closed).abs() < 1e-12);
    // the Bessel route at a non-half-integer order is continuous in nu
    let near = matern(1.5 + 1e-9, 0.8, 0.6, 0.0).eval(1.0, 1.6, false);
    assert!((near - closed).abs() < 1e-8);
}

#[test]
fn scalar_log_marginal_likelihood() {
    let k = KernelSpec::rbf(0.9, 1.0, 0.2);
    let y = 0.7;
    let (lml, _) = log_marginal_likelihood(&k, &[0.3], &[y]).unwrap();
    let s = 1.1;
    let want = -0.5 * y * y / s - 0.5 * s.ln() - 0.5 * LN_2PI;
    // jitter 1e-10 A perturbs the variance at the 1e-10 level
    assert!((lml - want).abs() < 1e-9, "{lml} vs {want}");
}

#[test]
fn duplicated_data_with_noise_has_finite_likelihood() {
    let x: Vec<f64> = linspace(-1.0, 1.0, 10);
    let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let xx = [x.clone(), x].concat();
    let yy = [y.clone(), y].concat();
    let (lml, g) = log_marginal_likelihood(&KernelSpec::rbf(1.0, 0.5, 0.01), &xx, &yy).unwrap();
    assert!(lml.is_finite() && g.iter().all(|v| v.is_finite()));
}

fn lml_fd_check(spec: &KernelSpec, x: &[f64], y: &[f64]) {
    let family = spec.family();
    let p = spec.log_params();
    let (_, grad) = log_marginal_likelihood(spec, x, y).unwrap();
    // fourth-order stencil: a wider step keeps round-off down on
    // ill-conditioned Gram matrices
    let h = 2e-3;
    let at = |i: usize, d: f64| {
        let mut q = p.clone();
        q[i] += d;
        log_marginal_likelihood(&KernelSpec::from_log_params(family, &q), x, y).unwrap().0
    };
    for i in 0..p.len() {
        let fd = (8.0 * (at(i, h) - at(i, -h)) - (at(i, 2.0 * h) - at(i, -2.0 * h))) / (12.0 * h);
        assert!(
            (grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
            "{spec:?} param {i}: analytic {} vs fd {fd}",
            grad[i]
        );
    }
}

#[test]
fn lml_gradient_for_every_family() {
    let x: Vec<f64> = (0..12).map(|i| -2.0 + 0.37 * i as f64 + 0.05 * (i as f64).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| (1.3 * v).cos() + 0.1 * (7.0 * v).sin()).collect();
    for spec in [
        KernelSpec::rbf(0.8, 0.7, 0.05),
        matern(0.1, 1.2, 2.0, 0.02),
        matern(1.5, 0.5, 0.9, 0.01),
        matern(4.0, 0.9, 1.1, 0.03),
        matern(0.7, 0.9, 0.4, 0.1),
        rq(0.8, 1.1, 0.6, 0.02),
    ] {
        lml_fd_check(&spec, &x, &y);
    }
}

#[test]
fn predict_matches_dense_solve_oracle() {
    let x = [-1.0, -0.3, 0.2, 0.9, 1.4];
    let y = [0.4, -0.2, 0.5, 1.1, 0.3];
    for spec in [KernelSpec::rbf(1.3, 0.8, 0.05), matern(0.1, 0.7, 1.5, 0.02), rq(2.0, 0.9, 0.5, 0.1)] {
        let model = GpModel::new(spec, x.to_vec(), y.to_vec()).unwrap();
        let jitter = model.jitter;
        let kmat: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..5)
                    .map(|j| spec.eval(x[i], x[j], i == j) + if i == j { jitter } else { 0.0 })
                    .collect()
            })
            .collect();
        for xs in [-1.5, 0.0, 0.2, 2.0] {
            let ks: Vec<f64> = x.iter().map(|&xi| spec.signal(xs - xi)).collect();
            let w = dense_solve(kmat.clone(), y.to_vec());
            let v = dense_solve(kmat.clone(), ks.clone());
            let mean: f64 = ks.iter().zip(&w).map(|(a, b)| a * b).sum();
            let var = spec.amplitude - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            let (m, s2) = model.predict(&[xs])[0];
            assert!((m - mean).abs() < 1e-10, "mean {m} vs {mean}");
            assert!((s2 - var.max(0.0)).abs() < 1e-10, "var {s2} vs {var}");
        }
    }
}

#[test]
fn noiseless_prediction_interpolates_and_far_field_reverts_to_prior() {
    let x = vec![-1.0, -0.2, 0.5, 1.3, 2.0];
    let y = vec![0.3, -0.7, 1.1, 0.2, -0.4];
    let spec = KernelSpec::rbf(0.6, 0.4, 0.0);
    let model = GpModel::new(spec, x.clone(), y.clone()).unwrap();
    for (p, want) in model.predict(&x).iter().zip(&y) {
        assert!((p.0 - want).abs() < 1e-8 && p.1.abs() < 1e-8, "{p:?} vs {want}");
    }
    let far = model.predict(&[200.0])[0];
    assert!(far.0.abs() < 1e-12 && (far.1 - 0.6).abs() < 1e-12);
}

#[test]
fn fit_on_zero_targets_predicts_zero() {
    let x = linspace(-1.0, 1.0, 15);
    let y = vec![0.0; 15];
    let model = fit(&x, &y, KernelFamily::Rbf, 4, 3).unwrap();
    assert!(model.kernel.amplitude.is_finite() && model.kernel.amplitude < 1.0);
    for (m, _) in model.predict(&linspace(-2.0, 2.0, 31)) {
        assert_eq!(m, 0.0);
    }
}

#[test]
fn fit_recovers_noiseless_smooth_function() {
    // on denser sets the 1e-10 A jitter floor alone leaves errors of a few 1e-6
    let x = linspace(0.0, 6.0, 8);
    let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let model = fit(&x, &y, KernelFamily::Rbf, 8, 0).unwrap();
    assert!(model.kernel.noise <= 1e-6, "{:?}", model.kernel);
    for (m, want) in model.predict_mean(&x).iter().zip(&y) {
        assert!((m - want).abs() < 1e-6, "{m} vs {want}");
    }
}

#[test]
fn fit_recovers_generating_noise_scale() {
    let (x, ch) = schrodinger_slice(0.1, 0);
    let model = fit(&x, &ch[0], KernelFamily::Rbf, 8, 0).unwrap();
    let sigma = model.kernel.noise.sqrt();
    assert!((0.05..=0.2).contains(&sigma), "sigma_n = {sigma}");
}

#[test]
fn fit_is_deterministic_per_seed() {
    let (x, ch) = schrodinger_slice(0.1, 4);
    let a = fit(&x, &ch[0], KernelFamily::RationalQuadratic, 3, 9).unwrap();
    let b = fit(&x, &ch[0], KernelFamily::RationalQuadratic, 3, 9).unwrap();
    assert_eq!(a.kernel, b.kernel);
}

#[test]
fn fit_needs_four_points() {
    assert!(fit(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], KernelFamily::Rbf, 2, 0).is_err());
}

#[test]
fn folds_partition_the_indices() {
    let folds = kfold_indices(53, 10, 7);
    assert_eq!(folds.len(), 10);
    let mut all: Vec<usize> = folds.concat();
    all.sort();
    assert_eq!(all, (0..53).collect::<Vec<_>>());
    assert!(folds.iter().all(|f| f.len() == 5 || f.len() == 6));
}

#[test]
fn kfold_recovers_noiseless_linear_data() {
    let x = linspace(-1.0, 1.0, 20);
    let y: Vec<f64> = x.iter().map(|v| 0.6 * v - 0.2).collect();
    let scores = kfold_kernel_select(&x, &y, 5, &KernelFamily::table_families(), 3, 1).unwrap();
    for s in &scores {
        // nu = 0.1 sample paths are too rough to follow a line between samples
        if s.family != (KernelFamily::Matern { nu: 0.1 }) {
            assert!(s.val_mse < 1e-4, "{s:?}");
        }
    }
    assert!(scores.windows(2).all(|w| w[0].val_mse <= w[1].val_mse));
}

#[test]
fn kfold_table_on_noisy_schrodinger_slice() {
    let (x, ch) = schrodinger_slice(0.1, 0);
    let scores = kfold_kernel_select(&x, &ch[0], 10, &KernelFamily::table_families(), 8, 0).unwrap();
    let get = |f: KernelFamily| *scores.iter().find(|s| s.family == f).unwrap();
    let rough = get(KernelFamily::Matern { nu: 0.1 });
    let rbf = get(KernelFamily::Rbf);
    let rq = get(KernelFamily::RationalQuadratic);
    assert!(rough.train_mse < 1e-5, "{rough:?}");
    // the rough kernel interpolates the noise and generalises worst
    assert_eq!(scores.last().unwrap().family, rough.family);
    assert!(rough.val_mse > 2.0 * rbf.val_mse);
    assert!((rbf.val_mse / rq.val_mse - 1.0).abs() < 0.2, "{rbf:?} {rq:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kernels.csv");
    write_kernel_table(&scores, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kernel,param,train_mse,val_mse");
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().any(|l| l.starts_with("matern,0.1,")));
    assert!(lines.iter().any(|l| l.starts_with("rbf,,")));
}

#[test]
fn smoothing_noiseless_targets_reproduces_them() {
    let (x, ch) = schrodinger_slice(0.0, 0);
    let s = smooth_boundary(&x, &ch[..1], KernelFamily::Rbf, 8, 0).unwrap();
    let a = s.models[0].kernel.amplitude;
    for i in 0..x.len() {
        // the 1e-10 A diagonal jitter bounds reproduction on 50 dense points
        assert!((s.mean[0][i] - ch[0][i]).abs() < 1e-5);
        assert!(s.std[0][i] >= 0.0 && s.std[0][i] <= 1e-3 * a);
    }
}

#[test]
fn smoothing_denoises_the_slice_and_shrinks_pure_noise() {
    let (x, noisy) = schrodinger_slice(0.1, 0);
    let (_, clean) = schrodinger_slice(0.0, 0);
    let s = smooth_boundary(&x, &noisy, KernelFamily::Rbf, 8, 0).unwrap();
    let mse = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64;
    assert!(mse(&s.mean[0], &clean[0]) < 0.5 * mse(&noisy[0], &clean[0]));
    let max_v = s.mean[1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_v < 0.1, "max |mean_v| = {max_v}");
    assert!(s.models[1].kernel.noise.sqrt() > 0.05);
    assert!(s.std.iter().flatten().all(|v| *v >= 0.0));
    assert_eq!(s.models.len(), 2);
}

#[test]
fn smoothed_boundary_csv_layout() {
    let (x, ch) = schrodinger_slice(0.1, 1);
    let s = smooth_boundary(&x, &ch, KernelFamily::Rbf, 2, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("smooth.csv");
    s.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,mean_0,std_0,mean_1,std_1");
    assert_eq!(text.lines().count(), 51);
}

fn arb_spec() -> impl Strategy<Value = KernelSpec> {
    (0usize..5, -2.0f64..1.0, -1.5f64..0.5, -6.0f64..0.0, -1.0f64..1.0).prop_map(|(f, la, ll, ln, lr)| {
        let a = 10f64.powf(la);
        let l = 10f64.powf(ll);
        let noise = a * 10f64.powf(ln);
        match f {
            0 => KernelSpec::rbf(a, l, noise),
            1 => matern(0.1, a, l, noise),
            2 => matern(1.5, a, l, noise),
            3 => matern(4.0, a, l, noise),
            _ => rq(10f64.powf(lr), a, l, noise),
        }
    })
}

fn arb_points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lml_gradient_matches_finite_differences(
        spec in arb_spec(),
        x in arb_points(2..15),
        phase in 0.0f64..PI,
    ) {
        let y: Vec<f64> = x.iter().map(|v| (v + phase).sin()).collect();
        lml_fd_check(&spec, &x, &y);
    }

    #[test]
    fn gram_is_symmetric_and_factorises_with_small_jitter(spec in arb_spec(), x in arb_points(2..30)) {
        let k = gram(&spec, &x);
        for i in 0..x.len() {
            for j in 0..x.len() {
                prop_assert!((k[(i, j)] - k[(j, i)]).abs() <= 1e-12);
            }
        }
        let (_, jitter) = factor_with_jitter(&k, spec.amplitude).unwrap();
        prop_assert!(jitter <= 1e-8 * spec.amplitude);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_a_point_never_increases_posterior_variance(
        spec in arb_spec(),
        x in arb_points(3..12),
        extra in -3.0f64..3.0,
        probe in prop::collection::vec(-4.0f64..4.0, 5),
    ) {
        let y: Vec<f64> = x.iter().map(|v| v.cos()).collect();
        let before = GpModel::new(spec, x.clone(), y.clone()).unwrap().predict(&probe);
        let after = GpModel::new(spec, [x, vec![extra]].concat(), [y, vec![0.2]].concat())
            .unwrap()
            .predict(&probe);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(a.1 <= b.1 + 1e-9 * spec.amplitude, "{} -> {}", b.1, a.1);
        }
    }

    #[test]
    fn noise_free_prediction_interpolates(
        n in 3usize..10,
        ll in -0.5f64..0.0,
        a in 0.2f64..3.0,
        family in 0usize..3,
        phase in 0.0f64..PI,
    ) {
        // well-separated inputs: spacing at least the lengthscale
        let l = 10f64.powf(ll);
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 1.1).collect();
        let y: Vec<f64> = x.iter().map(|v| (v + phase).sin()).collect();
        let spec = match family {
            0 => KernelSpec::rbf(a, l, 0.0),
            1 => matern(0.1, a, l, 0.0),
            _ => matern(2.5, a, l, 0.0),
        };
        let model = GpModel::new(spec, x.clone(), y.clone()).unwrap();
        for ((m, v), want) in model.predict(&x).iter().zip(&y) {
            prop_assert!((m - want).abs() <= 1e-8, "{m} vs {want}");
            prop_assert!(v.abs() <= 1e-8);
        }
    }
}
