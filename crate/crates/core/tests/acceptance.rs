//! Exit criteria. Each test prints one `PASS`/`FAIL` line.

mod common;

use std::time::Instant;

use dybm_core::dybm_mean::{gaussian_loglik, MeanModel};
use dybm_core::dybm_variance::{
    dybm_var_forecast_recursive, fit_garch11_qmle, fit_variance_batch, forecast_constants,
    garch_filter, garch_forecast_n, map_garch_to_dybm11, GarchInit, GarchParams, VarFitConfig,
    VarModel,
};
use dybm_core::eval::{
    gen_garch_series, gen_var_dybm_series, run_mean_experiment, run_variance_experiment, seeded_rng,
};
use dybm_core::eval::{ExperimentConfig, GeneratorSpec};
use dybm_core::ggd::{
    ggd_logpdf, grad_beta, grad_mu, grad_rho, readjust, rho_from_c, sample_ggd, GgdParams,
    ReadjustOrder, ResidualBuffer,
};
use rand::Rng;

use common::{central_diff, integrate, rel_err};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id} [{name}]: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

const GRAD_TOL: f64 = 1e-5;
// denominator floor for relative errors of gradients that are near zero
const GRAD_FLOOR: f64 = 1e-3;

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let mut rng = seeded_rng(1);
    let mut worst: f64 = 0.0;
    let h: f64 = 1e-6;

    for _ in 0..200 {
        let rho = rng.random_range(0.6..4.0);
        let beta = rng.random_range(0.2..3.0);
        let mag: f64 = rng.random_range(1e-3..3.0);
        let e = if rng.random::<bool>() { mag } else { -mag };
        let mu = rng.random_range(-1.0..1.0);
        let x = mu + e;
        let p = GgdParams::new(rho, beta).unwrap();
        let fd_mu = central_diff(|m| ggd_logpdf(x, m, p), mu, h.min(mag / 10.0));
        let fd_beta = central_diff(
            |b| ggd_logpdf(x, mu, GgdParams::new(rho, b).unwrap()),
            beta,
            h,
        );
        let fd_rho = central_diff(
            |r| ggd_logpdf(x, mu, GgdParams::new(r, beta).unwrap()),
            rho,
            h,
        );
        worst = worst
            .max(rel_err(grad_mu(x, mu, p), fd_mu, GRAD_FLOOR))
            .max(rel_err(grad_beta(x, mu, p), fd_beta, GRAD_FLOOR))
            .max(rel_err(grad_rho(x, mu, p), fd_rho, GRAD_FLOOR));
    }

    for _ in 0..200 {
        let dim = rng.random_range(1..=3);
        let lag = rng.random_range(2..=5);
        let k = rng.random_range(1..=2);
        let lambdas: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.95)).collect();
        let mut model = MeanModel::new(dim, lag, &lambdas).unwrap();
        for b in model.bias.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        for m in model
            .lag_weights
            .iter_mut()
            .chain(model.trace_weights.iter_mut())
        {
            for i in 0..dim {
                for j in 0..dim {
                    m.set(i, j, rng.random_range(-0.3..0.3));
                }
            }
        }
        for s in model.sigma.iter_mut() {
            *s = rng.random_range(0.5..2.0);
        }
        let mut state = model.initial_state();
        for _ in 0..rng.random_range(0..12) {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            state.advance(&x, &lambdas).unwrap();
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = model.loglik_gradient(&state, &x).unwrap();
        let ll = |m: &MeanModel<f64>| m.loglik(&state, &x).unwrap();

        for j in 0..dim {
            let fd = central_diff(
                |v| {
                    let mut m = model.clone();
                    m.bias[j] = v;
                    ll(&m)
                },
                model.bias[j],
                h,
            );
            worst = worst.max(rel_err(grad.bias[j], fd, GRAD_FLOOR));
            let fd = central_diff(
                |v| {
                    let mut m = model.clone();
                    m.sigma[j] = v;
                    ll(&m)
                },
                model.sigma[j],
                h,
            );
            worst = worst.max(rel_err(grad.sigma[j], fd, GRAD_FLOOR));
        }
        for (which, n_mats) in [(0usize, lag - 1), (1usize, k)] {
            for idx in 0..n_mats {
                for i in 0..dim {
                    for j in 0..dim {
                        let get = |m: &MeanModel<f64>| {
                            if which == 0 {
                                m.lag_weights[idx].get(i, j)
                            } else {
                                m.trace_weights[idx].get(i, j)
                            }
                        };
                        let fd = central_diff(
                            |v| {
                                let mut m = model.clone();
                                if which == 0 {
                                    m.lag_weights[idx].set(i, j, v);
                                } else {
                                    m.trace_weights[idx].set(i, j, v);
                                }
                                ll(&m)
                            },
                            get(&model),
                            h,
                        );
                        let analytic = if which == 0 {
                            grad.lag_weights[idx].get(i, j)
                        } else {
                            grad.trace_weights[idx].get(i, j)
                        };
                        worst = worst.max(rel_err(analytic, fd, GRAD_FLOOR));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < GRAD_TOL && secs < 5.0;
    report(
        1,
        "gradient suite",
        pass,
        &format!("max rel err {worst:.2e}, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_normalization_suite() {
    let mut worst: f64 = 0.0;
    for &rho in &[0.8, 1.0, 1.5, 2.0, 3.0, 5.0] {
        for &beta in &[0.5, 1.0, 2.0] {
            let mu = 0.3;
            let p = GgdParams::new(rho, beta).unwrap();
            // tail mass beyond this half-width is below e^{-60}
            let half_width = 60f64.powf(1.0 / rho) / beta.sqrt();
            let f = |x: f64| ggd_logpdf(x, mu, p).exp();
            let total = integrate(&f, mu - half_width, mu, 1e-11)
                + integrate(&f, mu, mu + half_width, 1e-11);
            worst = worst.max((total - 1.0).abs());
        }
    }
    let mut gauss_err: f64 = 0.0;
    for &(x, mu, sigma) in &[
        (0.7f64, 0.2f64, 1.3f64),
        (-1.0, 0.5, 0.4),
        (3.0, -2.0, 2.5),
        (0.0, 0.0, 1.0),
    ] {
        let p = GgdParams::gaussian(sigma).unwrap();
        let g = gaussian_loglik(&[x], &[mu], &[sigma]).unwrap();
        gauss_err = gauss_err.max((ggd_logpdf(x, mu, p) - g).abs());
        gauss_err = gauss_err.max((grad_mu(x, mu, p) - (x - mu) / (sigma * sigma)).abs());
    }
    let pass = worst <= 1e-6 && gauss_err <= 1e-12;
    report(
        2,
        "normalization",
        pass,
        &format!("max |mass-1| {worst:.2e}, gaussian reduction {gauss_err:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_garch_equivalence() {
    let mut rng = seeded_rng(3);
    let mut worst_exact: f64 = 0.0;
    let mut worst_burn: f64 = 0.0;
    const BURN_IN: usize = 400;
    for draw in 0..20 {
        let b1: f64 = rng.random_range(0.05..0.9);
        let a1 = rng.random_range(0.01..(0.99 - b1).min(0.3));
        let a0 = rng.random_range(0.01..1.0);
        let g = GarchParams::<f64>::garch11(a0, a1, b1).unwrap();
        let dybm = map_garch_to_dybm11(&g).unwrap();
        let (errors, _) = gen_garch_series(&g, 2000, 100 + draw).unwrap();
        let s2_dybm = dybm.filter(&errors);
        // zero pre-sample errors correspond to a pre-sample variance a0/(1-b1)
        let exact = garch_filter(&g, &errors, GarchInit::Value(dybm.v0));
        let sample = garch_filter(&g, &errors, GarchInit::SampleVariance);
        for t in 0..errors.len() {
            worst_exact = worst_exact.max(rel_err(s2_dybm[t], exact[t], 1e-300));
            if t >= BURN_IN {
                worst_burn = worst_burn.max(rel_err(s2_dybm[t], sample[t], 1e-300));
            }
        }
    }
    let pass = worst_exact <= 1e-10 && worst_burn <= 1e-10;
    report(
        3,
        "GARCH equivalence",
        pass,
        &format!("matched init {worst_exact:.2e}, sample-variance init after {BURN_IN} steps {worst_burn:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_closed_form_forecast() {
    let start = Instant::now();
    let mut rng = seeded_rng(4);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 50 {
        let l1: f64 = rng.random_range(0.05..0.95);
        let w1 = rng.random_range(0.0..0.4f64.min(0.98 - l1));
        let u1 = rng.random_range(0.0..0.5);
        let v0 = rng.random_range(0.01..1.0);
        let m = VarModel::new(v0, vec![w1], vec![u1], vec![l1]).unwrap();
        let beta = w1 + l1;
        let gamma = l1 * (u1 - w1);
        let gap = (beta * beta + 4.0 * gamma).sqrt();
        if beta + gamma >= 0.98 || gap < 1e-3 {
            continue;
        }
        draws += 1;
        let s2 = rng.random_range(0.1..3.0);
        let e2 = rng.random_range(0.0..5.0);
        let c = forecast_constants(&m, s2, e2).unwrap();
        for n in 0..=100 {
            let rec = dybm_var_forecast_recursive(&m, s2, e2, n).unwrap();
            worst = worst.max(rel_err(c.forecast(n), rec, 1e-300));
        }
    }
    let mut worst_g: f64 = 0.0;
    for &(a0, a1, b1) in &[(0.1, 0.1, 0.8), (0.05, 0.2, 0.7), (0.3, 0.05, 0.9)] {
        let g = GarchParams::<f64>::garch11(a0, a1, b1).unwrap();
        let m = map_garch_to_dybm11(&g).unwrap();
        let c = forecast_constants(&m, 2.0, 0.7).unwrap();
        assert_eq!(c.gamma_c, 0.0);
        for n in 1..=50 {
            worst_g = worst_g.max(rel_err(
                c.forecast(n),
                garch_forecast_n(&g, 2.0, n).unwrap(),
                1e-300,
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && worst_g <= 1e-12 && secs < 1.0;
    report(
        4,
        "closed-form forecast",
        pass,
        &format!("closed vs recursion {worst:.2e}, gamma=0 vs GARCH {worst_g:.2e}, {secs:.3}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_shape_estimator_recovery() {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for &rho in &[0.7f64, 1.0, 1.5, 2.0, 3.0] {
        let p = GgdParams::new(rho, 1.0).unwrap();
        let draws = sample_ggd(0.0, p, 20_000, &mut seeded_rng(0));
        let buf = ResidualBuffer::from_residuals(&draws).unwrap();
        let est = readjust(
            GgdParams::new(2.0, 0.5).unwrap(),
            &buf,
            ReadjustOrder::ShapeFirst,
        )
        .unwrap();
        let err = (est.rho - rho).abs() / rho;
        worst = worst.max(err);
        details.push(format!("{rho}->{:.3}", est.rho));
    }
    let anchor = (rho_from_c(0.5f64).unwrap() - 1.0)
        .abs()
        .max((rho_from_c(2.0 / std::f64::consts::PI).unwrap() - 2.0).abs());
    let pass = worst <= 0.10 && anchor <= 1e-8;
    report(
        5,
        "shape recovery",
        pass,
        &format!(
            "{} worst {:.1}%, anchors {anchor:.1e}",
            details.join(" "),
            worst * 100.0
        ),
    );
    assert!(pass);
}

fn synthetic_mean_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorSpec::ArGgd {
            phi: 0.6,
            rho: 1.0,
            beta: 2.0,
            n: 6000,
        }),
        train_len: Some(5000),
        d: 10,
        lambdas: vec![0.1, 0.9],
        eta: 0.01,
        epochs: 5,
        readjust_period: 100,
        seed,
        ..ExperimentConfig::default()
    }
}

#[test]
fn criterion_6_synthetic_mean_experiment() {
    let start = Instant::now();
    let mut better = 0;
    let mut rho_ok = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let r = match run_mean_experiment(&synthetic_mean_config(seed)) {
            Ok(r) => r,
            Err(e) => {
                rows.push(format!("{seed}:diverged ({e})"));
                continue;
            }
        };
        let (g, n, rho) = (
            r.get("rmse_test_ggd").unwrap(),
            r.get("rmse_test_gaussian").unwrap(),
            r.get("final_rho").unwrap(),
        );
        if g <= n {
            better += 1;
        }
        if (0.8..=1.3).contains(&rho) {
            rho_ok += 1;
        }
        rows.push(format!("{seed}:{g:.4}/{n:.4}/rho={rho:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    for row in &rows {
        println!("  {row}");
    }
    let pass = better >= 7 && rho_ok >= 8 && secs < 60.0;
    report(
        6,
        "synthetic mean/GGD",
        pass,
        &format!("GGD<=Gaussian in {better}/10, rho in range {rho_ok}/10, {secs:.1}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_7a_garch_qmle_recovery() {
    let start = Instant::now();
    let truth = GarchParams::<f64>::garch11(0.1, 0.1, 0.8).unwrap();
    let (errors, _) = gen_garch_series(&truth, 20_000, 0).unwrap();
    let fit = fit_garch11_qmle(&errors).unwrap();
    let persistence = fit.a[0] + fit.b[0];
    let lr = fit.long_run_variance().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (0.85..=0.95).contains(&persistence) && (lr - 1.0).abs() <= 0.10 && secs < 120.0;
    report(
        7,
        "GARCH QMLE recovery",
        pass,
        &format!(
            "a0={:.4} a1={:.4} b1={:.4} a1+b1={persistence:.4} long-run {lr:.4}, {secs:.1}s",
            fit.a0, fit.a[0], fit.b[0]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7b_variance_dybm_recovery() {
    let start = Instant::now();
    let truth = VarModel::<f64>::new(0.2, vec![0.15], vec![0.1], vec![0.9]).unwrap();
    let fitted = gen_var_dybm_series(&truth, 20_000, 0)
        .and_then(|(errors, _)| fit_variance_batch(&errors, 1, &[0.9], &VarFitConfig::default()));
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match fitted {
        Ok(fit) => {
            let within = |est: f64, t: f64| (est - t).abs() <= 0.3 * t;
            let ok = within(fit.v0, 0.2) && within(fit.w[0], 0.15) && within(fit.u[0], 0.1);
            (
                ok && secs < 120.0,
                format!(
                    "v0={:.4} w1={:.4} u1={:.4}, {secs:.1}s",
                    fit.v0, fit.w[0], fit.u[0]
                ),
            )
        }
        Err(e) => (false, format!("fit failed: {e}")),
    };
    report(7, "variance DyBM recovery", pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_8_real_data_replication() {
    let Ok(path) = std::env::var("DYBM_IBM_CSV") else {
        // the price file is not bundled, so there is nothing to pass or fail
        println!("criterion 8 [real-data replication]: SKIP (set DYBM_IBM_CSV to an adjusted-close CSV to run)");
        return;
    };
    let base = ExperimentConfig {
        data_path: Some(path),
        ..ExperimentConfig::default()
    };
    let mean = run_mean_experiment(&ExperimentConfig {
        train_len: std::env::var("DYBM_IBM_TRAIN_LEN")
            .ok()
            .and_then(|v| v.parse().ok()),
        ..base.clone()
    })
    .unwrap();
    let var = run_variance_experiment(&base).unwrap();
    let (g, n, rho) = (
        mean.get("rmse_test_ggd").unwrap(),
        mean.get("rmse_test_gaussian").unwrap(),
        mean.get("final_rho").unwrap(),
    );
    let (pd, pg) = (
        var.get("pearson_test_dybm").unwrap(),
        var.get("pearson_test_garch").unwrap(),
    );
    let pass = g < n && (0.7..=1.2).contains(&rho) && pd >= pg - 0.05;
    report(8, "real-data replication", pass, &format!("rmse test ggd {g:.4} vs gaussian {n:.4}, rho {rho:.3}, pearson test dybm {pd:.3} vs garch {pg:.3}"));
    assert!(pass);
}
