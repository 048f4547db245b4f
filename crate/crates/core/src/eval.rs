//! Metrics, synthetic generators, and the two experiment harnesses.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dybm_mean::{MeanModel, TrainConfig};
use crate::dybm_variance::{
    fit_garch11_qmle, fit_variance_batch, garch_filter, population_variance, GarchInit,
    GarchParams, VarFitConfig, VarModel,
};
use crate::error::{invalid, DybmError, Result};
use crate::ggd::{sample_ggd, GgdDyBm, GgdParams};
use crate::scalar::Scalar;
use crate::timeseries_io::{load_price_csv, split, standardize, to_returns, SeriesFrame};

/// Steps discarded at the start of every synthetic series.
pub const DEFAULT_BURN_IN: usize = 500;

/// The crate's single source of randomness.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `√(mean (pred − truth)²)`
pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(DybmError::Shape(format!(
            "rmse over lengths {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let sse: T = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok((sse / T::from_count(pred.len())).sqrt())
}

/// Sample Pearson correlation.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(DybmError::Shape(format!(
            "pearson over lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = T::from_count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(DybmError::Degenerate(
            "pearson correlation of a constant sequence".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt()))
        .max(-T::one())
        .min(T::one()))
}

/// GARCH(1,1) errors `e_t = σ_t z_t` and their true variances.
pub fn gen_garch_series<T: Scalar>(
    params: &GarchParams<T>,
    n: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    gen_garch_series_with_burn_in(params, n, DEFAULT_BURN_IN, seed)
}

pub fn gen_garch_series_with_burn_in<T: Scalar>(
    params: &GarchParams<T>,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if params.p != 1 || params.q != 1 {
        return invalid("generator expects GARCH(1,1)");
    }
    let mut s2 = params.long_run_variance()?;
    let (a0, a1, b1) = (params.a0, params.a[0], params.b[0]);
    let mut rng = seeded_rng(seed);
    let mut errors = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    for t in 0..burn_in + n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = s2.sqrt() * T::lit(z);
        if t >= burn_in {
            errors.push(e);
            variances.push(s2);
        }
        s2 = a0 + a1 * e * e + b1 * s2;
    }
    Ok((errors, variances))
}

/// Errors driven by a variance DyBM: `e_t = σ_t z_t` with `σ²_t` from `model`.
pub fn gen_var_dybm_series<T: Scalar>(
    model: &VarModel<T>,
    n: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    model.validate()?;
    let mut rng = seeded_rng(seed);
    let mut state = model.initial_state();
    let mut errors = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    for t in 0..DEFAULT_BURN_IN + n {
        let s2 = model.predict(&state);
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = s2.sqrt() * T::lit(z);
        if !e.is_finite() {
            return Err(DybmError::Diverged(format!(
                "simulated variance overflowed at step {t}"
            )));
        }
        if t >= DEFAULT_BURN_IN {
            errors.push(e);
            variances.push(s2);
        }
        state.advance(e, &model.lambdas);
    }
    Ok((errors, variances))
}

/// AR(1) series `x_t = φ x_{t−1} + ε_t` with generalized Gaussian noise.
pub fn gen_ar_ggd_series<T: Scalar>(
    phi: T,
    p: GgdParams<T>,
    n: usize,
    seed: u64,
) -> Result<SeriesFrame<T>> {
    gen_ar_ggd_series_with_burn_in(phi, p, n, DEFAULT_BURN_IN, seed)
}

pub fn gen_ar_ggd_series_with_burn_in<T: Scalar>(
    phi: T,
    p: GgdParams<T>,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SeriesFrame<T>> {
    if !(phi.abs() < T::one()) {
        return invalid(format!("AR coefficient must satisfy |phi| < 1, got {phi}"));
    }
    if n == 0 {
        return invalid("series length must be positive");
    }
    let mut rng = seeded_rng(seed);
    let noise = sample_ggd(T::zero(), p, burn_in + n, &mut rng);
    let mut x = T::zero();
    let mut out = Vec::with_capacity(n);
    for (t, &eps) in noise.iter().enumerate() {
        x = phi * x + eps;
        if t >= burn_in {
            out.push(x);
        }
    }
    SeriesFrame::from_values("x", &out)
}

/// Synthetic data source for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    ArGgd {
        phi: f64,
        rho: f64,
        beta: f64,
        n: usize,
    },
    Garch {
        a0: f64,
        a1: f64,
        b1: f64,
        n: usize,
    },
}

impl GeneratorSpec {
    /// The generated series, plus the true variance path for GARCH data.
    pub fn generate(&self, seed: u64) -> Result<(SeriesFrame<f64>, Option<Vec<f64>>)> {
        match *self {
            GeneratorSpec::ArGgd { phi, rho, beta, n } => Ok((
                gen_ar_ggd_series(phi, GgdParams::new(rho, beta)?, n, seed)?,
                None,
            )),
            GeneratorSpec::Garch { a0, a1, b1, n } => {
                let (e, s2) = gen_garch_series(&GarchParams::garch11(a0, a1, b1)?, n, seed)?;
                Ok((SeriesFrame::from_values("e", &e)?, Some(s2)))
            }
        }
    }
}

fn default_lag() -> usize {
    66
}
fn default_lambdas() -> Vec<f64> {
    vec![0.1, 0.9]
}
fn default_eta() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    5
}
fn default_period() -> usize {
    100
}
fn default_lambda_var() -> f64 {
    0.97
}
fn default_var_iters() -> usize {
    20_000
}
fn default_var_step() -> f64 {
    1.0
}

/// Flat experiment configuration; absent fields take the defaults of the
/// daily-returns study (d = 66, λ = {0.1, 0.9}, η = 0.01, 5 epochs, T = 100,
/// variance decay 0.97).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<String>,
    /// Price column of `data_path`; defaults to the first value column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Training points; the mean experiment defaults to all but the last
    /// 66, the variance experiment to the first half.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_len: Option<usize>,
    #[serde(default = "default_lag")]
    pub d: usize,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_period")]
    pub readjust_period: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda_var")]
    pub lambda_var: f64,
    #[serde(default)]
    pub l1_weight: f64,
    #[serde(default = "default_var_iters")]
    pub var_iters: usize,
    #[serde(default = "default_var_step")]
    pub var_step: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.data_path, &self.generator) {
            (Some(_), Some(_)) => return invalid("config names both data_path and generator"),
            (None, None) => return invalid("config needs data_path or generator"),
            _ => {}
        }
        if self.d < 2 {
            return invalid(format!("lag d must be at least 2, got {}", self.d));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return invalid("lambdas must be nonempty and lie in (0, 1)");
        }
        if !(self.eta > 0.0) {
            return invalid("eta must be positive");
        }
        if self.readjust_period < 2 {
            return invalid("readjust_period must be at least 2");
        }
        if !(self.lambda_var > 0.0 && self.lambda_var < 1.0) {
            return invalid("lambda_var must lie in (0, 1)");
        }
        if !(self.l1_weight >= 0.0) {
            return invalid("l1_weight must be nonnegative");
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig::new(self.epochs, self.eta)
    }

    /// Input series: simple returns of `data_path`, or generated data.
    fn load(&self) -> Result<(SeriesFrame<f64>, Option<Vec<f64>>)> {
        if let Some(path) = &self.data_path {
            let cols: Vec<&str> = self.value_column.iter().map(String::as_str).collect();
            let prices = load_price_csv::<f64>(path, &cols)?;
            Ok((to_returns(&prices)?, None))
        } else {
            self.generator
                .as_ref()
                .expect("validated")
                .generate(self.seed)
        }
    }
}

/// Named metrics plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
}

impl MetricsReport {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            metrics: BTreeMap::new(),
            config: config.clone(),
        }
    }

    fn insert(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(DybmError::Diverged(format!("metric {key} is not finite")));
        }
        self.metrics.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Standardized train/test frames (train statistics reused for test).
fn prepare(
    series: &SeriesFrame<f64>,
    train_len: usize,
) -> Result<(SeriesFrame<f64>, SeriesFrame<f64>)> {
    let (train, test) = split(series, train_len)?;
    let (train, stats) = standardize(&train, None)?;
    let (test, _) = standardize(&test, Some(&stats))?;
    Ok((train, test))
}

fn rmse_rows(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    let p: Vec<f64> = pred.iter().flatten().copied().collect();
    let t: Vec<f64> = truth.iter().flatten().copied().collect();
    rmse(&p, &t)
}

/// Trains the Gaussian and the generalized-Gaussian DyBM with identical
/// settings and compares train/test RMSE of their one-step predictions.
///
/// Both models are trained on the training split; evaluation is a
/// prediction-only pass over the whole series with the trained parameters.
pub fn run_mean_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let (series, _) = cfg.load()?;
    let train_len = cfg
        .train_len
        .unwrap_or_else(|| series.len().saturating_sub(66));
    let (train, test) = prepare(&series, train_len)?;
    let full = train.concat(&test)?;
    let n_train = train.len();
    let tc = cfg.train_config();

    let mut gaussian = MeanModel::new(series.dim(), cfg.d, &cfg.lambdas)?;
    gaussian.train_online(train.values(), &tc)?;
    let pred_gauss = gaussian.predict_series(full.values())?;

    let mut generalized = GgdDyBm::new(
        MeanModel::new(series.dim(), cfg.d, &cfg.lambdas)?,
        Some(cfg.readjust_period),
    )?;
    generalized.train_online(train.values(), &tc)?;
    let pred_ggd = generalized.mean.predict_series(full.values())?;

    let truth = full.values();
    let mut report = MetricsReport::new(cfg);
    report.insert("n_train", n_train as f64)?;
    report.insert("n_test", test.len() as f64)?;
    report.insert(
        "rmse_train_gaussian",
        rmse_rows(&pred_gauss[..n_train], &truth[..n_train])?,
    )?;
    report.insert(
        "rmse_test_gaussian",
        rmse_rows(&pred_gauss[n_train..], &truth[n_train..])?,
    )?;
    report.insert(
        "rmse_train_ggd",
        rmse_rows(&pred_ggd[..n_train], &truth[..n_train])?,
    )?;
    report.insert(
        "rmse_test_ggd",
        rmse_rows(&pred_ggd[n_train..], &truth[n_train..])?,
    )?;
    report.insert("final_rho", generalized.params[0].rho)?;
    report.insert("final_beta", generalized.params[0].beta)?;
    for (j, p) in generalized.params.iter().enumerate().skip(1) {
        report.insert(&format!("final_rho_{j}"), p.rho)?;
        report.insert(&format!("final_beta_{j}"), p.beta)?;
    }
    Ok(report)
}

/// Residuals `x_t − μ_t` of a Gaussian DyBM trained on the first
/// `train_len` points, over the whole (standardized) series.
pub fn mean_model_residuals(
    series: &SeriesFrame<f64>,
    train_len: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<f64>> {
    if series.dim() != 1 {
        return invalid("the variance experiment expects a univariate series");
    }
    let (train, test) = prepare(series, train_len)?;
    let full = train.concat(&test)?;
    let mut model = MeanModel::new(1, cfg.d, &cfg.lambdas)?;
    model.train_online(train.values(), &cfg.train_config())?;
    let pred = model.predict_series(full.values())?;
    Ok(full
        .values()
        .iter()
        .zip(&pred)
        .map(|(x, m)| x[0] - m[0])
        .collect())
}

/// GARCH(1,1) (quasi-MLE) against G-DyBM(1,1) (batch L1 fit) on the first
/// part of an error series; Pearson correlation of predicted `σ̂²_t` with
/// realized `e²_t` on both parts.
///
/// GARCH-generated data are used as errors directly; any other source is
/// first passed through a Gaussian DyBM and its residuals are used.
pub fn run_variance_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let (series, true_s2) = cfg.load()?;
    let train_len = cfg.train_len.unwrap_or(series.len() / 2);
    let errors = match (&cfg.generator, &true_s2) {
        (Some(GeneratorSpec::Garch { .. }), Some(_)) => series.column(0),
        _ => mean_model_residuals(&series, train_len, cfg)?,
    };
    if train_len == 0 || train_len >= errors.len() {
        return invalid(format!("train_len must lie in 1..{}", errors.len()));
    }
    let (train_e, _) = errors.split_at(train_len);

    let garch = fit_garch11_qmle(train_e)?;
    let fit_cfg = VarFitConfig {
        l1_weight: cfg.l1_weight,
        iters: cfg.var_iters,
        step: cfg.var_step,
    };
    let dybm = fit_variance_batch(train_e, 1, &[cfg.lambda_var], &fit_cfg)?;

    let s2_garch = garch_filter(
        &garch,
        &errors,
        GarchInit::Value(population_variance(train_e)),
    );
    let s2_dybm = dybm.filter(&errors);
    let e2: Vec<f64> = errors.iter().map(|e| e * e).collect();

    let mut report = MetricsReport::new(cfg);
    report.insert("n_train", train_len as f64)?;
    report.insert("n_test", (errors.len() - train_len) as f64)?;
    report.insert(
        "pearson_train_garch",
        pearson(&s2_garch[..train_len], &e2[..train_len])?,
    )?;
    report.insert(
        "pearson_test_garch",
        pearson(&s2_garch[train_len..], &e2[train_len..])?,
    )?;
    report.insert(
        "pearson_train_dybm",
        pearson(&s2_dybm[..train_len], &e2[..train_len])?,
    )?;
    report.insert(
        "pearson_test_dybm",
        pearson(&s2_dybm[train_len..], &e2[train_len..])?,
    )?;
    report.insert("garch_a0", garch.a0)?;
    report.insert("garch_a1", garch.a[0])?;
    report.insert("garch_b1", garch.b[0])?;
    report.insert("dybm_v0", dybm.v0)?;
    report.insert("dybm_w1", dybm.w[0])?;
    report.insert("dybm_u1", dybm.u[0])?;
    if let Some(truth) = &true_s2 {
        report.insert("pearson_true_sigma2_garch", pearson(&s2_garch, truth)?)?;
        report.insert("pearson_true_sigma2_dybm", pearson(&s2_dybm, truth)?)?;
    }
    Ok(report)
}
