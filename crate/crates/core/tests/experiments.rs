use dybm_core::dybm_variance::{garch_filter, map_garch_to_dybm11, GarchInit, GarchParams};
use dybm_core::eval::*;
use dybm_core::ggd::{moment_ratio_c, GgdParams};
use dybm_core::timeseries_io::write_series_csv;

fn small_mean_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorSpec::ArGgd {
            phi: 0.6,
            rho: 1.0,
            beta: 2.0,
            n: 1500,
        }),
        train_len: Some(1200),
        d: 5,
        epochs: 2,
        eta: 0.001,
        seed,
        ..ExperimentConfig::default()
    }
}

#[test]
fn reports_are_byte_identical() {
    let a = run_mean_experiment(&small_mean_config(4))
        .unwrap()
        .to_json()
        .unwrap();
    let b = run_mean_experiment(&small_mean_config(4))
        .unwrap()
        .to_json()
        .unwrap();
    assert_eq!(a, b);
    assert!(a.contains("\"seed\": 4"));

    let cfg = ExperimentConfig {
        generator: Some(GeneratorSpec::Garch {
            a0: 0.1,
            a1: 0.1,
            b1: 0.8,
            n: 2000,
        }),
        var_iters: 2000,
        ..ExperimentConfig::default()
    };
    let a = run_variance_experiment(&cfg).unwrap().to_json().unwrap();
    assert_eq!(a, run_variance_experiment(&cfg).unwrap().to_json().unwrap());
}

#[test]
fn zero_epochs_gives_equal_rmse() {
    let cfg = ExperimentConfig {
        epochs: 0,
        ..small_mean_config(0)
    };
    let r = run_mean_experiment(&cfg).unwrap();
    assert_eq!(r.get("rmse_test_gaussian"), r.get("rmse_test_ggd"));
    assert_eq!(r.get("rmse_train_gaussian"), r.get("rmse_train_ggd"));
    assert_eq!(r.get("final_rho"), Some(2.0));
}

#[test]
fn mean_experiment_reads_price_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    let x = gen_ar_ggd_series(0.3, GgdParams::new(1.0, 2.0).unwrap(), 400, 2).unwrap();
    // prices from returns of about 1% daily scale
    let mut p = 100.0;
    let prices: Vec<f64> = x
        .column(0)
        .iter()
        .map(|r| {
            p *= 1.0 + 0.01 * r;
            p
        })
        .collect();
    write_series_csv(
        &dybm_core::timeseries_io::SeriesFrame::from_values("close", &prices).unwrap(),
        &path,
    )
    .unwrap();
    let cfg = ExperimentConfig {
        data_path: Some(path.display().to_string()),
        d: 4,
        ..ExperimentConfig::default()
    };
    let r = run_mean_experiment(&cfg).unwrap();
    assert_eq!(r.get("n_train"), Some(333.0));
    assert_eq!(r.get("n_test"), Some(66.0));
}

#[test]
fn ar_generator_autocorrelation() {
    let x = gen_ar_ggd_series(0.9, GgdParams::new(2.0, 0.5).unwrap(), 100_000, 0)
        .unwrap()
        .column(0);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cov = x
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / n;
    assert!((cov / var - 0.9).abs() < 0.03);

    let iid = gen_ar_ggd_series(0.0, GgdParams::new(2.0, 0.5).unwrap(), 100_000, 1)
        .unwrap()
        .column(0);
    assert!((moment_ratio_c(&iid).unwrap() - 2.0 / std::f64::consts::PI).abs() < 0.02);
}

#[test]
fn burn_in_does_not_move_moments() {
    let g = GarchParams::garch11(0.1, 0.1, 0.8).unwrap();
    let (a, _) = gen_garch_series_with_burn_in(&g, 100_000, 500, 7).unwrap();
    let (b, _) = gen_garch_series_with_burn_in(&g, 100_000, 1000, 7).unwrap();
    let m2 = |e: &[f64]| e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64;
    // shared stream shifted by 500 draws: long-run moments agree
    assert!(
        (m2(&a) / m2(&b) - 1.0).abs() < 0.01,
        "{} vs {}",
        m2(&a),
        m2(&b)
    );

    let p = GgdParams::new(1.0, 2.0).unwrap();
    let xa = gen_ar_ggd_series_with_burn_in(0.6, p, 100_000, 500, 7)
        .unwrap()
        .column(0);
    let xb = gen_ar_ggd_series_with_burn_in(0.6, p, 100_000, 1000, 7)
        .unwrap()
        .column(0);
    assert!((m2(&xa) / m2(&xb) - 1.0).abs() < 0.01);
}

#[test]
fn garch_without_dynamics_is_white_noise() {
    let g = GarchParams::garch11(0.7, 0.0, 0.0).unwrap();
    let (e, s2) = gen_garch_series(&g, 100_000, 5).unwrap();
    assert!(s2.iter().all(|&v| v == 0.7));
    let var = e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64;
    assert!((var / 0.7 - 1.0).abs() < 0.02);
}

#[test]
fn mapped_true_params_give_identical_pearson() {
    let g = GarchParams::garch11(0.1, 0.1, 0.8).unwrap();
    let (e, _) = gen_garch_series(&g, 5000, 3).unwrap();
    let m = map_garch_to_dybm11(&g).unwrap();
    let e2: Vec<f64> = e.iter().map(|x| x * x).collect();
    let garch = garch_filter(&g, &e, GarchInit::Value(m.v0));
    let dybm = m.filter(&e);
    let (pg, pd) = (pearson(&garch, &e2).unwrap(), pearson(&dybm, &e2).unwrap());
    assert!((pg - pd).abs() < 1e-12, "{pg} vs {pd}");
}

#[test]
fn fitted_garch_tracks_true_variance() {
    let cfg = ExperimentConfig {
        generator: Some(GeneratorSpec::Garch {
            a0: 0.1,
            a1: 0.1,
            b1: 0.8,
            n: 20_000,
        }),
        var_iters: 2000,
        ..ExperimentConfig::default()
    };
    let r = run_variance_experiment(&cfg).unwrap();
    assert!(r.get("pearson_true_sigma2_garch").unwrap() >= 0.9, "{r:?}");
    assert_eq!(r.get("n_train"), Some(10_000.0));
}
