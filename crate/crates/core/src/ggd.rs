//! Generalized Gaussian observation noise for the DyBM.
//!
//! Density: `√β / (2Γ(1+1/ρ)) · exp(−β^{ρ/2} |x−μ|^ρ)`. ρ = 2 is Gaussian
//! (with β = 1/(2σ²)), ρ = 1 is Laplacian.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dybm_mean::{MeanModel, RecordMode, TrainConfig};
use crate::error::{invalid, DybmError, Result};
use crate::scalar::Scalar;
use crate::special::{digamma, ln_gamma};

/// Floor applied to `|x−μ|` before fractional powers and logarithms.
pub const RESIDUAL_FLOOR: f64 = 1e-8;
/// Search interval of the shape inversion.
pub const RHO_MIN: f64 = 0.1;
pub const RHO_MAX: f64 = 20.0;
/// Clamp applied to the moment ratio before inversion.
pub const C_MIN: f64 = 1e-4;
pub const C_MAX: f64 = 0.75 - 1e-6;
/// Upper end of the small-ratio branch of the piecewise shape approximation.
pub const SMALL_C_LIMIT: f64 = 0.131_246;

/// Shape ρ and inverse variance β of one output dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GgdParams<T> {
    pub rho: T,
    pub beta: T,
}

impl<T: Scalar> GgdParams<T> {
    pub fn new(rho: T, beta: T) -> Result<Self> {
        if !(rho > T::zero() && rho.is_finite()) {
            return invalid(format!("shape rho must be positive and finite, got {rho}"));
        }
        if !(beta > T::zero() && beta.is_finite()) {
            return invalid(format!(
                "inverse variance beta must be positive and finite, got {beta}"
            ));
        }
        Ok(Self { rho, beta })
    }

    /// ρ = 2, β = 1/(2σ²).
    pub fn gaussian(sigma: T) -> Result<Self> {
        Self::new(T::lit(2.0), (T::lit(2.0) * sigma * sigma).recip())
    }

    /// Variance of the distribution: Γ(3/ρ) / (β Γ(1/ρ)).
    pub fn variance(&self) -> T {
        (ln_gamma(T::lit(3.0) / self.rho) - ln_gamma(self.rho.recip())).exp() / self.beta
    }
}

#[inline]
fn floored_abs<T: Scalar>(e: T) -> T {
    e.abs().max(T::lit(RESIDUAL_FLOOR))
}

/// `½ ln β − ln 2 − ln Γ(1+1/ρ) − β^{ρ/2} |x−μ|^ρ`
pub fn ggd_logpdf<T: Scalar>(x: T, mu: T, p: GgdParams<T>) -> T {
    let half = T::lit(0.5);
    let e = (x - mu).abs();
    half * p.beta.ln()
        - T::LN_2()
        - ln_gamma(T::one() + p.rho.recip())
        - p.beta.powf(half * p.rho) * e.powf(p.rho)
}

/// ∂LL/∂β = 1/(2β) − (ρ/2) β^{ρ/2−1} |x−μ|^ρ
pub fn grad_beta<T: Scalar>(x: T, mu: T, p: GgdParams<T>) -> T {
    let half = T::lit(0.5);
    let e = floored_abs(x - mu);
    half / p.beta - half * p.rho * p.beta.powf(half * p.rho - T::one()) * e.powf(p.rho)
}

/// ∂LL/∂ρ = Ψ(1+1/ρ)/ρ² − (β(x−μ)²)^{ρ/2} ln(β(x−μ)²) / 2
pub fn grad_rho<T: Scalar>(x: T, mu: T, p: GgdParams<T>) -> T {
    let half = T::lit(0.5);
    let e = floored_abs(x - mu);
    let z = p.beta * e * e;
    digamma(T::one() + p.rho.recip()) / (p.rho * p.rho) - half * z.powf(half * p.rho) * z.ln()
}

/// ∂LL/∂μ = β^{ρ/2} ρ sign(x−μ) |x−μ|^{ρ−1}
pub fn grad_mu<T: Scalar>(x: T, mu: T, p: GgdParams<T>) -> T {
    let e = x - mu;
    if e == T::zero() {
        return T::zero();
    }
    p.beta.powf(T::lit(0.5) * p.rho) * p.rho * e.signum() * floored_abs(e).powf(p.rho - T::one())
}

/// Closed-form β maximizing the likelihood of `residuals` at shape `rho`:
/// `(T / (ρ Σ|e|^ρ))^{2/ρ}`.
pub fn mle_beta<T: Scalar>(residuals: &[T], rho: T) -> Result<T> {
    if residuals.is_empty() {
        return Err(DybmError::Degenerate("no residuals".into()));
    }
    if !(rho > T::zero()) {
        return invalid(format!("shape rho must be positive, got {rho}"));
    }
    if residuals.iter().all(|e| e.abs() <= T::lit(RESIDUAL_FLOOR)) {
        return Err(DybmError::Degenerate("all residuals are zero".into()));
    }
    let sum: T = residuals.iter().map(|e| e.abs().powf(rho)).sum();
    let n = T::from_count(residuals.len());
    let beta = (n / (rho * sum)).powf(T::lit(2.0) / rho);
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(DybmError::Diverged(format!(
            "residuals too large to estimate beta (sum of |e|^rho = {sum})"
        )));
    }
    Ok(beta)
}

/// `c = (mean |e|)² / mean e²`, at most 1 by Cauchy–Schwarz.
pub fn moment_ratio_c<T: Scalar>(residuals: &[T]) -> Result<T> {
    if residuals.is_empty() {
        return Err(DybmError::Degenerate("no residuals".into()));
    }
    let n = T::from_count(residuals.len());
    let m1 = residuals.iter().map(|e| e.abs()).sum::<T>() / n;
    let m2 = residuals.iter().map(|&e| e * e).sum::<T>() / n;
    if m2 == T::zero() {
        return Err(DybmError::Degenerate("all residuals are zero".into()));
    }
    Ok(m1 * m1 / m2)
}

/// Population moment ratio `Γ(2/ρ)² / (Γ(1/ρ) Γ(3/ρ))`; strictly increasing in ρ.
pub fn shape_ratio<T: Scalar>(rho: T) -> T {
    let r = rho.recip();
    (T::lit(2.0) * ln_gamma(T::lit(2.0) * r) - ln_gamma(r) - ln_gamma(T::lit(3.0) * r)).exp()
}

/// Clamps a moment ratio into `[C_MIN, C_MAX]`.
pub fn clamp_ratio<T: Scalar>(c: T) -> T {
    c.max(T::lit(C_MIN)).min(T::lit(C_MAX))
}

/// Inverts [`shape_ratio`] by bisection on `[RHO_MIN, RHO_MAX]`.
///
/// Ratios beyond what the interval attains map to its endpoints.
pub fn rho_from_c<T: Scalar>(c: T) -> Result<T> {
    if !(c > T::zero() && c < T::lit(0.75)) {
        return invalid(format!("moment ratio must lie in (0, 0.75), got {c}"));
    }
    let (mut lo, mut hi) = (T::lit(RHO_MIN), T::lit(RHO_MAX));
    if c <= shape_ratio(lo) {
        return Ok(lo);
    }
    if c >= shape_ratio(hi) {
        return Ok(hi);
    }
    let tol = T::lit(1e-10);
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if shape_ratio(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    Ok(T::lit(0.5) * (lo + hi))
}

/// Closed-form approximation for small ratios, `2 ln(27/16) / ln(3/(4c²))`,
/// valid for `c ∈ (0, SMALL_C_LIMIT)`.
pub fn rho_from_small_c<T: Scalar>(c: T) -> Option<T> {
    if c > T::zero() && c < T::lit(SMALL_C_LIMIT) {
        let num = T::lit(2.0) * T::lit(27.0 / 16.0).ln();
        Some(num / (T::lit(3.0) / (T::lit(4.0) * c * c)).ln())
    } else {
        None
    }
}

/// Draws `n` i.i.d. samples: `z ~ Gamma(1/ρ, 1)`, `x = μ ± z^{1/ρ}/√β`.
pub fn sample_ggd<T: Scalar, R: Rng + ?Sized>(
    mu: T,
    p: GgdParams<T>,
    n: usize,
    rng: &mut R,
) -> Vec<T> {
    let rho = p.rho.as_f64();
    let gamma = Gamma::new(1.0 / rho, 1.0).expect("valid gamma parameters");
    let scale = p.beta.as_f64().sqrt().recip();
    (0..n)
        .map(|_| {
            let z: f64 = gamma.sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            mu + T::lit(sign * z.powf(1.0 / rho) * scale)
        })
        .collect()
}

/// Sliding window of the latest `period` residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBuffer<T> {
    period: usize,
    window: VecDeque<T>,
}

impl<T: Scalar> ResidualBuffer<T> {
    pub fn new(period: usize) -> Result<Self> {
        if period < 2 {
            return invalid(format!(
                "readjustment period must be at least 2, got {period}"
            ));
        }
        Ok(Self {
            period,
            window: VecDeque::with_capacity(period),
        })
    }

    pub fn from_residuals(residuals: &[T]) -> Result<Self> {
        let mut buf = Self::new(residuals.len())?;
        residuals.iter().for_each(|&e| buf.push(e));
        Ok(buf)
    }

    pub fn push(&mut self, e: T) {
        if self.window.len() == self.period {
            self.window.pop_front();
        }
        self.window.push_back(e);
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.period
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn residuals(&self) -> Vec<T> {
        self.window.iter().copied().collect()
    }
}

/// Order of the two revisions in [`readjust`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadjustOrder {
    /// New ρ from the moment ratio, then β at the new ρ.
    #[default]
    ShapeFirst,
    /// β at the old ρ, then the new ρ.
    ScaleFirst,
}

/// Re-estimates ρ (moment-ratio inversion) and β (closed-form MLE) from a
/// full residual window.
pub fn readjust<T: Scalar>(
    params: GgdParams<T>,
    buffer: &ResidualBuffer<T>,
    order: ReadjustOrder,
) -> Result<GgdParams<T>> {
    if !buffer.is_full() {
        return Err(DybmError::Degenerate(format!(
            "residual buffer holds {} of {} entries",
            buffer.window.len(),
            buffer.period
        )));
    }
    let residuals = buffer.residuals();
    let rho = rho_from_c(clamp_ratio(moment_ratio_c(&residuals)?))?;
    let beta = match order {
        ReadjustOrder::ShapeFirst => mle_beta(&residuals, rho)?,
        ReadjustOrder::ScaleFirst => mle_beta(&residuals, params.rho)?,
    };
    GgdParams::new(rho, beta)
}

/// How ρ and β evolve between readjustments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeUpdate {
    /// Frozen between periodic readjustments.
    #[default]
    Heuristic,
    /// Also take per-step gradient steps on ρ and β.
    FullGradient,
}

/// Generalized-Gaussian DyBM: the mean predictor of [`MeanModel`] with a
/// generalized Gaussian likelihood per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GgdDyBm<T> {
    pub mean: MeanModel<T>,
    pub params: Vec<GgdParams<T>>,
    /// Readjust every this many updates; `None` disables readjustment.
    pub readjust_period: Option<usize>,
    pub order: ReadjustOrder,
    pub shape_update: ShapeUpdate,
    buffers: Vec<ResidualBuffer<T>>,
    updates: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct GgdDyBmDoc<T> {
    #[serde(flatten)]
    mean: MeanModel<T>,
    rho: Vec<T>,
    beta: Vec<T>,
    readjust_period: Option<usize>,
}

impl<T: Scalar> Serialize for GgdDyBm<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GgdDyBmDoc {
            mean: self.mean.clone(),
            rho: self.params.iter().map(|p| p.rho).collect(),
            beta: self.params.iter().map(|p| p.beta).collect(),
            readjust_period: self.readjust_period,
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for GgdDyBm<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = GgdDyBmDoc::<T>::deserialize(d)?;
        doc.mean.validate().map_err(D::Error::custom)?;
        if doc.rho.len() != doc.mean.dim || doc.beta.len() != doc.mean.dim {
            return Err(D::Error::custom("rho/beta length differs from N"));
        }
        let params = doc
            .rho
            .iter()
            .zip(&doc.beta)
            .map(|(&r, &b)| GgdParams::new(r, b))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        GgdDyBm::with_params(doc.mean, params, doc.readjust_period).map_err(D::Error::custom)
    }
}

impl<T: Scalar> GgdDyBm<T> {
    /// Starts from the Gaussian likelihood implied by the mean model's σ.
    pub fn new(mean: MeanModel<T>, readjust_period: Option<usize>) -> Result<Self> {
        let params = mean
            .sigma
            .iter()
            .map(|&s| GgdParams::gaussian(s))
            .collect::<Result<Vec<_>>>()?;
        Self::with_params(mean, params, readjust_period)
    }

    pub fn with_params(
        mean: MeanModel<T>,
        params: Vec<GgdParams<T>>,
        readjust_period: Option<usize>,
    ) -> Result<Self> {
        if params.len() != mean.dim {
            return Err(DybmError::Shape(format!(
                "{} shape pairs for {} dimensions",
                params.len(),
                mean.dim
            )));
        }
        let period = readjust_period.unwrap_or(2);
        let buffers = (0..mean.dim)
            .map(|_| ResidualBuffer::new(period))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mean,
            params,
            readjust_period,
            order: ReadjustOrder::default(),
            shape_update: ShapeUpdate::default(),
            buffers,
            updates: 0,
        })
    }

    /// Total log-likelihood of `x` under the current prediction.
    pub fn loglik(&self, state: &crate::dybm_mean::MeanState<T>, x: &[T]) -> T {
        let mu = self.mean.predict(state);
        x.iter()
            .zip(&mu)
            .zip(&self.params)
            .map(|((&xj, &mj), &p)| ggd_logpdf(xj, mj, p))
            .sum()
    }

    /// One online update at observation `x`; returns the residual.
    pub fn step(
        &mut self,
        state: &crate::dybm_mean::MeanState<T>,
        x: &[T],
        lr: T,
    ) -> Result<Vec<T>> {
        if x.len() != self.mean.dim {
            return Err(DybmError::Shape(format!(
                "observation has {} values, model expects {}",
                x.len(),
                self.mean.dim
            )));
        }
        let mu = self.mean.predict(state);
        let score: Vec<T> = x
            .iter()
            .zip(&mu)
            .zip(&self.params)
            .map(|((&xj, &mj), &p)| grad_mu(xj, mj, p))
            .collect();
        let grad = self.mean.gradient_from_score(state, &score);
        self.mean.apply_gradient(&grad, lr, false)?;

        if self.shape_update == ShapeUpdate::FullGradient {
            for ((p, &xj), &mj) in self.params.iter_mut().zip(x).zip(&mu) {
                let rho = (p.rho + lr * grad_rho(xj, mj, *p))
                    .max(T::lit(RHO_MIN))
                    .min(T::lit(RHO_MAX));
                let beta = p.beta + lr * grad_beta(xj, mj, *p);
                if !beta.is_finite() || !rho.is_finite() {
                    return Err(DybmError::Diverged(
                        "shape gradient became non-finite".into(),
                    ));
                }
                *p = GgdParams::new(rho, beta.max(T::lit(1e-12)))?;
            }
        }

        let residual: Vec<T> = x.iter().zip(&mu).map(|(&a, &b)| a - b).collect();
        self.updates += 1;
        if let Some(period) = self.readjust_period {
            for (buf, &e) in self.buffers.iter_mut().zip(&residual) {
                buf.push(e);
            }
            if self.updates.is_multiple_of(period) {
                for (p, buf) in self.params.iter_mut().zip(&self.buffers) {
                    match readjust(*p, buf, self.order) {
                        Ok(next) => *p = next,
                        // an all-zero window carries no information about the shape
                        Err(DybmError::Degenerate(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok(residual)
    }

    /// Online training loop mirroring [`MeanModel::train_online`].
    pub fn train_online(&mut self, series: &[Vec<T>], cfg: &TrainConfig<T>) -> Result<Vec<Vec<T>>> {
        cfg.validate()?;
        if series.is_empty() {
            return Err(DybmError::Degenerate("training series is empty".into()));
        }
        let mut recorded = Vec::new();
        for epoch in 0..cfg.epochs {
            let last = epoch + 1 == cfg.epochs;
            let mut state = self.mean.initial_state();
            for x in series {
                if last && cfg.record == RecordMode::LastEpoch {
                    recorded.push(self.mean.predict(&state));
                }
                self.step(&state, x, cfg.learning_rate)?;
                state.advance(x, &self.mean.lambdas)?;
            }
        }
        if cfg.epochs > 0 && cfg.record == RecordMode::FinalPass {
            recorded = self.mean.predict_series(series)?;
        }
        Ok(recorded)
    }

    /// Number of online updates applied so far.
    pub fn updates(&self) -> usize {
        self.updates
    }
}
