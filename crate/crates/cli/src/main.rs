//! `dybm-vol`: train, fit, forecast and evaluate DyBM volatility models.
// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dybm_core::dybm_mean::{MeanModel, TrainConfig};
use dybm_core::dybm_variance::{
    fit_garch11_qmle, fit_variance_batch, forecast_constants, forecast_path_recursive,
    garch_forecast_n, GarchParams, VarFitConfig, VarModel,
};
use dybm_core::eval::{
    rmse, run_mean_experiment, run_variance_experiment, ExperimentConfig, GeneratorSpec,
};
use dybm_core::ggd::GgdDyBm;
use dybm_core::timeseries_io::{
    load_price_csv, split, standardize, to_returns, write_series_csv, SeriesFrame,
};
use dybm_core::DybmError;
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "dybm-vol",
    version,
    about = "DyBM forecasters for heavy-tailed, heteroskedastic series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a price CSV into standardized simple returns.
    Ingest(IngestArgs),
    /// Train a Gaussian DyBM on a series CSV.
    TrainMean(TrainArgs),
    /// Train a generalized-Gaussian DyBM on a series CSV.
    TrainGgd(TrainArgs),
    /// Batch-fit a variance DyBM to an error series.
    FitVar(FitVarArgs),
    /// Fit GARCH(1,1) by quasi-maximum likelihood.
    FitGarch(FitGarchArgs),
    /// Multi-step variance forecasts from a fitted model.
    ForecastVar(ForecastArgs),
    /// RMSE of a trained mean model's one-step predictions on a series.
    Evaluate(EvaluateArgs),
    /// Gaussian vs generalized-Gaussian DyBM comparison.
    ExperimentMean(ExperimentArgs),
    /// GARCH(1,1) vs variance DyBM comparison.
    ExperimentVar(ExperimentArgs),
    /// Write a synthetic series.
    GenData(GenArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Price CSV with a header row and a date column.
    #[arg(long)]
    input: PathBuf,
    /// Price column(s); defaults to every non-date column.
    #[arg(long)]
    column: Vec<String>,
    /// Scale by the standard deviation of the first this-many returns only.
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the scaling statistics as JSON.
    #[arg(long)]
    scaling_out: Option<PathBuf>,
}

#[derive(Args)]
struct Hyper {
    #[arg(long, default_value_t = 66)]
    lag: usize,
    /// Eligibility-trace decay; repeat for several traces.
    #[arg(long = "decay", default_values_t = [0.1, 0.9])]
    decays: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Series CSV (date column plus value columns).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    column: Vec<String>,
    #[command(flatten)]
    hyper: Hyper,
    /// Shape/scale readjustment period (generalized model only).
    #[arg(long, default_value_t = 100)]
    readjust_period: usize,
    /// Model JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Also write the final-pass one-step predictions as CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct FitVarArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    column: Option<String>,
    /// Number of squared-error lags.
    #[arg(long, default_value_t = 1)]
    lag: usize,
    /// Variance-trace decay; repeat for several modes.
    #[arg(long = "lambda-var", default_values_t = [0.97])]
    lambda_var: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitGarchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    /// Variance DyBM(1,1) or GARCH(1,1) JSON.
    #[arg(long)]
    model: PathBuf,
    /// Current one-step variance σ²_t.
    #[arg(long)]
    sigma2: f64,
    /// Last squared error e²_{t−1}.
    #[arg(long, default_value_t = 0.0)]
    e2: f64,
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    /// Cross-check the closed form against the recursion before printing.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Mean or generalized model JSON from train-mean / train-ggd.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    column: Vec<String>,
    /// Score only predictions from this index on (earlier points still feed the state).
    #[arg(long, default_value_t = 0)]
    from: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV (replaces any data source named in the config).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long = "decay")]
    decays: Vec<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    readjust_period: Option<usize>,
    #[arg(long)]
    lambda_var: Option<f64>,
    #[arg(long)]
    l1: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    ArGgd,
    Garch,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.6)]
    phi: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    a0: f64,
    #[arg(long, default_value_t = 0.1)]
    a1: f64,
    #[arg(long, default_value_t = 0.8)]
    b1: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": ").replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::TrainMean(a) => train(a, false),
        Command::TrainGgd(a) => train(a, true),
        Command::FitVar(a) => fit_var(a),
        Command::FitGarch(a) => fit_garch(a),
        Command::ForecastVar(a) => forecast(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExperimentMean(a) => experiment(a, false),
        Command::ExperimentVar(a) => experiment(a, true),
        Command::GenData(a) => gen_data(a),
    }
}

fn columns(cols: &[String]) -> Vec<&str> {
    cols.iter().map(String::as_str).collect()
}

fn write_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let prices: SeriesFrame<f64> = load_price_csv(&a.input, &columns(&a.column))?;
    let returns = to_returns(&prices)?;
    let (scaled, info) = match a.train_len {
        Some(n) => {
            let (train, _) = split(&returns, n)?;
            let (_, info) = standardize(&train, None)?;
            standardize(&returns, Some(&info))?
        }
        None => standardize(&returns, None)?,
    };
    write_series_csv(&scaled, &a.out)?;
    if let Some(path) = a.scaling_out {
        write_json(&info, Some(&path))?;
    }
    Ok(())
}

fn train(a: TrainArgs, generalized: bool) -> Result<()> {
    let series: SeriesFrame<f64> = load_price_csv(&a.data, &columns(&a.column))?;
    let h = &a.hyper;
    let cfg = TrainConfig::new(h.epochs, h.lr);
    let mean = MeanModel::new(series.dim(), h.lag, &h.decays)?;
    let predictions = if generalized {
        let mut model = GgdDyBm::new(mean, Some(a.readjust_period))?;
        let pred = model.train_online(series.values(), &cfg)?;
        write_json(&model, Some(&a.out))?;
        pred
    } else {
        let mut model = mean;
        let pred = model.train_online(series.values(), &cfg)?;
        write_json(&model, Some(&a.out))?;
        pred
    };
    if let Some(path) = a.predictions {
        let names = series.names().iter().map(|n| format!("{n}_pred")).collect();
        write_series_csv(
            &SeriesFrame::new(series.timestamps().to_vec(), names, predictions)?,
            path,
        )?;
    }
    Ok(())
}

fn error_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let cols: Vec<&str> = column.into_iter().collect();
    let series: SeriesFrame<f64> = load_price_csv(path, &cols)?;
    Ok(series.column(0))
}

fn fit_var(a: FitVarArgs) -> Result<()> {
    let errors = error_column(&a.data, a.column.as_deref())?;
    let cfg = VarFitConfig {
        l1_weight: a.l1,
        iters: a.iters,
        step: a.step,
    };
    let model = fit_variance_batch(&errors, a.lag, &a.lambda_var, &cfg)?;
    write_json(&model, Some(&a.out))
}

fn fit_garch(a: FitGarchArgs) -> Result<()> {
    let errors = error_column(&a.data, a.column.as_deref())?;
    write_json(&fit_garch11_qmle(&errors)?, Some(&a.out))
}

/// Largest relative gap tolerated by `forecast-var --check`.
const CHECK_TOLERANCE: f64 = 1e-6;

fn forecast(a: ForecastArgs) -> Result<()> {
    if !(a.sigma2 >= 0.0) || !(a.e2 >= 0.0) {
        bail!("--sigma2 and --e2 must be nonnegative");
    }
    let doc: Value = read_json(&a.model)?;
    let path: Vec<f64> = if doc.get("a0").is_some() {
        let g: GarchParams<f64> = serde_json::from_value(doc).context("parsing GARCH model")?;
        g.validate()?;
        let path = (0..=a.horizon)
            .map(|n| garch_forecast_n(&g, a.sigma2, n))
            .collect::<dybm_core::Result<Vec<_>>>()?;
        if a.check {
            let mut s = a.sigma2;
            let (a0, ab) = (g.a0, g.a[0] + g.b[0]);
            for (n, &v) in path.iter().enumerate().skip(1) {
                s = a0 + ab * s;
                check_gap(n, v, s)?;
            }
        }
        path
    } else {
        let m: VarModel<f64> = serde_json::from_value(doc).context("parsing variance model")?;
        m.validate()?;
        match forecast_constants(&m, a.sigma2, a.e2) {
            Ok(c) => {
                let mut path: Vec<f64> = (0..=a.horizon).map(|n| c.forecast(n)).collect();
                if a.check {
                    let rec = forecast_path_recursive(&m, a.sigma2, a.e2, a.horizon)?;
                    for (n, (&v, &r)) in path.iter().zip(&rec).enumerate() {
                        check_gap(n, v, r)?;
                    }
                }
                // horizon 0 is the current variance itself, not a rounded reconstruction
                path[0] = a.sigma2;
                path
            }
            Err(e @ (DybmError::NoClosedForm(_) | DybmError::Nonstationary(_))) => {
                if a.check {
                    bail!("cannot check: {e}");
                }
                forecast_path_recursive(&m, a.sigma2, a.e2, a.horizon)?
            }
            Err(e) => return Err(e.into()),
        }
    };
    let mut text = String::from("horizon,sigma2\n");
    for (n, v) in path.iter().enumerate() {
        text.push_str(&format!("{n},{v}\n"));
    }
    match a.out {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_gap(n: usize, closed: f64, recursive: f64) -> Result<()> {
    let gap = (closed - recursive).abs() / recursive.abs().max(f64::MIN_POSITIVE);
    if !(gap <= CHECK_TOLERANCE) {
        bail!("closed form and recursion disagree at horizon {n}: {closed} vs {recursive}");
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let doc: Value = read_json(&a.model)?;
    let model: MeanModel<f64> = if doc.get("rho").is_some() {
        serde_json::from_value::<GgdDyBm<f64>>(doc)
            .context("parsing model")?
            .mean
    } else {
        serde_json::from_value(doc).context("parsing model")?
    };
    model.validate()?;
    let series: SeriesFrame<f64> = load_price_csv(&a.data, &columns(&a.column))?;
    if series.dim() != model.dim {
        bail!(
            "series has {} columns, model expects {}",
            series.dim(),
            model.dim
        );
    }
    if a.from >= series.len() {
        bail!(
            "--from {} leaves nothing to score in {} points",
            a.from,
            series.len()
        );
    }
    let pred = model.predict_series(series.values())?;
    let p: Vec<f64> = pred[a.from..].iter().flatten().copied().collect();
    let t: Vec<f64> = series.values()[a.from..]
        .iter()
        .flatten()
        .copied()
        .collect();
    let mut report = std::collections::BTreeMap::new();
    report.insert("n", p.len() as f64);
    report.insert("rmse", rmse(&p, &t)?);
    write_json(&report, a.out.as_deref())
}

fn experiment(a: ExperimentArgs, variance: bool) -> Result<()> {
    let mut cfg: ExperimentConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &a.data {
        cfg.data_path = Some(d.display().to_string());
        cfg.generator = None;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if a.train_len.is_some() {
        cfg.train_len = a.train_len;
    }
    if let Some(v) = a.lag {
        cfg.d = v;
    }
    if !a.decays.is_empty() {
        cfg.lambdas = a.decays.clone();
    }
    if let Some(v) = a.lr {
        cfg.eta = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.readjust_period {
        cfg.readjust_period = v;
    }
    if let Some(v) = a.lambda_var {
        cfg.lambda_var = v;
    }
    if let Some(v) = a.l1 {
        cfg.l1_weight = v;
    }
    let report = if variance {
        run_variance_experiment(&cfg)?
    } else {
        run_mean_experiment(&cfg)?
    };
    write_json(&report, a.out.as_deref())
}

fn gen_data(a: GenArgs) -> Result<()> {
    let spec = match a.kind {
        GenKind::ArGgd => GeneratorSpec::ArGgd {
            phi: a.phi,
            rho: a.rho,
            beta: a.beta,
            n: a.n,
        },
        GenKind::Garch => GeneratorSpec::Garch {
            a0: a.a0,
            a1: a.a1,
            b1: a.b1,
            n: a.n,
        },
    };
    let (series, variances) = spec.generate(a.seed)?;
    let series = match variances {
        Some(s2) => {
            let rows = series
                .values()
                .iter()
                .zip(&s2)
                .map(|(e, &v)| vec![e[0], v])
                .collect();
            SeriesFrame::new(
                series.timestamps().to_vec(),
                vec!["e".into(), "sigma2".into()],
                rows,
            )?
        }
        None => series,
    };
    write_series_csv(&series, &a.out)?;
    Ok(())
}
