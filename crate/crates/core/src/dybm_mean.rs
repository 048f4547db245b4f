//! Gaussian DyBM: one-step mean prediction from a lag FIFO and eligibility
//! traces, trained online by stochastic gradient ascent on the Gaussian
//! log-likelihood.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DybmError, Result};
use crate::scalar::Scalar;

/// Dense square matrix, row-major. Serialized as nested rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.n + col] = v;
    }

    /// `out += self · v`
    fn mul_add_into(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *o = *o + row.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    /// `self += scale · a bᵀ`
    fn add_outer(&mut self, scale: T, a: &[T], b: &[T]) {
        for (i, &ai) in a.iter().enumerate() {
            let s = scale * ai;
            for (j, &bj) in b.iter().enumerate() {
                self.data[i * self.n + j] = self.data[i * self.n + j] + s * bj;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> From<Matrix<T>> for Vec<Vec<T>> {
    fn from(m: Matrix<T>) -> Self {
        m.data.chunks(m.n.max(1)).map(<[T]>::to_vec).collect()
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for Matrix<T> {
    type Error = String;

    fn try_from(rows: Vec<Vec<T>>) -> std::result::Result<Self, String> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(format!("matrix with {n} rows is not square"));
        }
        Ok(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

impl<T: Scalar> Serialize for Matrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<T>> = self.clone().into();
        rows.serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Matrix<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        Matrix::try_from(rows).map_err(serde::de::Error::custom)
    }
}

/// Parameters of the Gaussian DyBM mean predictor.
///
/// `lag_weights[δ-1]` multiplies `x[t−δ]` for δ = 1..d−1 and
/// `trace_weights[k]` multiplies the trace with decay `lambdas[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MeanModel<T> {
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "d")]
    pub lag: usize,
    pub lambdas: Vec<T>,
    #[serde(rename = "b")]
    pub bias: Vec<T>,
    #[serde(rename = "W")]
    pub lag_weights: Vec<Matrix<T>>,
    #[serde(rename = "U")]
    pub trace_weights: Vec<Matrix<T>>,
    pub sigma: Vec<T>,
}

/// FIFO of the `d−1` latest observations (newest first) and one eligibility
/// trace per decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanState<T> {
    fifo: VecDeque<Vec<T>>,
    traces: Vec<Vec<T>>,
}

impl<T: Scalar> MeanState<T> {
    pub fn zeros(dim: usize, lag: usize, n_traces: usize) -> Self {
        Self {
            fifo: (0..lag - 1).map(|_| vec![T::zero(); dim]).collect(),
            traces: vec![vec![T::zero(); dim]; n_traces],
        }
    }

    /// `x[t−δ]` for δ = 1..d−1.
    pub fn lagged(&self, delta: usize) -> &[T] {
        &self.fifo[delta - 1]
    }

    pub fn trace(&self, k: usize) -> &[T] {
        &self.traces[k]
    }

    /// Dequeues the oldest FIFO entry, folds it into every trace as
    /// `α ← λα + x_old`, then enqueues `x`.
    pub fn advance(&mut self, x: &[T], lambdas: &[T]) -> Result<()> {
        let dim = self.traces.first().map_or(x.len(), Vec::len);
        if x.len() != dim || lambdas.len() != self.traces.len() {
            return Err(DybmError::Shape(format!(
                "observation of length {} / {} decays for state of width {dim} / {} traces",
                x.len(),
                lambdas.len(),
                self.traces.len()
            )));
        }
        let oldest = self.fifo.pop_back().expect("fifo holds d-1 >= 1 slots");
        for (trace, &lambda) in self.traces.iter_mut().zip(lambdas) {
            for (a, &o) in trace.iter_mut().zip(&oldest) {
                *a = lambda * *a + o;
            }
        }
        let mut slot = oldest;
        slot.copy_from_slice(x);
        self.fifo.push_front(slot);
        Ok(())
    }
}

/// Gradient of the log-likelihood with respect to every mean-model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanGradient<T> {
    pub bias: Vec<T>,
    pub lag_weights: Vec<Matrix<T>>,
    pub trace_weights: Vec<Matrix<T>>,
    pub sigma: Vec<T>,
}

/// Which predictions [`MeanModel::train_online`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// Prediction-only pass with the trained parameters.
    #[default]
    FinalPass,
    /// Online predictions made during the last training epoch.
    LastEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub learning_rate: T,
    #[serde(default)]
    pub update_sigma: bool,
    #[serde(default)]
    pub record: RecordMode,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(epochs: usize, learning_rate: T) -> Self {
        Self {
            epochs,
            learning_rate,
            update_sigma: false,
            record: RecordMode::FinalPass,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

/// `Σ_j −½ ln(2πσ_j²) − (x_j−μ_j)²/(2σ_j²)`
pub fn gaussian_loglik<T: Scalar>(x: &[T], mu: &[T], sigma: &[T]) -> Result<T> {
    if x.len() != mu.len() || x.len() != sigma.len() {
        return Err(DybmError::Shape(
            "x, mu and sigma must have equal length".into(),
        ));
    }
    let half = T::lit(0.5);
    let two_pi = T::lit(2.0) * T::PI();
    let mut ll = T::zero();
    for ((&xj, &mj), &sj) in x.iter().zip(mu).zip(sigma) {
        if !(sj > T::zero()) {
            return invalid(format!("sigma must be positive, got {sj}"));
        }
        let var = sj * sj;
        let e = xj - mj;
        ll = ll - half * (two_pi * var).ln() - e * e / (T::lit(2.0) * var);
    }
    Ok(ll)
}

impl<T: Scalar> MeanModel<T> {
    /// Zero-initialized model with unit σ.
    pub fn new(dim: usize, lag: usize, lambdas: &[T]) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        if lag < 2 {
            return invalid(format!("lag d must be at least 2, got {lag}"));
        }
        if lambdas.is_empty() {
            return invalid("at least one decay rate is required");
        }
        if let Some(l) = lambdas.iter().find(|&&l| !(l > T::zero() && l < T::one())) {
            return invalid(format!("decay rates must lie in (0, 1), got {l}"));
        }
        Ok(Self {
            dim,
            lag,
            lambdas: lambdas.to_vec(),
            bias: vec![T::zero(); dim],
            lag_weights: (1..lag).map(|_| Matrix::zeros(dim)).collect(),
            trace_weights: lambdas.iter().map(|_| Matrix::zeros(dim)).collect(),
            sigma: vec![T::one(); dim],
        })
    }

    /// Checks shapes and invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.dim, self.lag, &self.lambdas)?;
        let shapes_ok = self.bias.len() == self.dim
            && self.sigma.len() == self.dim
            && self.lag_weights.len() == fresh.lag_weights.len()
            && self.trace_weights.len() == fresh.trace_weights.len()
            && self
                .lag_weights
                .iter()
                .chain(&self.trace_weights)
                .all(|m| m.dim() == self.dim);
        if !shapes_ok {
            return Err(DybmError::Shape(
                "model arrays disagree with N, d and lambdas".into(),
            ));
        }
        if self.sigma.iter().any(|&s| !(s > T::zero())) {
            return invalid("sigma must be positive");
        }
        self.check_finite()
    }

    pub fn n_traces(&self) -> usize {
        self.lambdas.len()
    }

    pub fn initial_state(&self) -> MeanState<T> {
        MeanState::zeros(self.dim, self.lag, self.n_traces())
    }

    /// `μ = b + Σ_δ W[δ] x[t−δ] + Σ_k U[k] α_k`
    pub fn predict(&self, state: &MeanState<T>) -> Vec<T> {
        let mut mu = self.bias.clone();
        for (delta, w) in self.lag_weights.iter().enumerate() {
            w.mul_add_into(state.lagged(delta + 1), &mut mu);
        }
        for (k, u) in self.trace_weights.iter().enumerate() {
            u.mul_add_into(state.trace(k), &mut mu);
        }
        mu
    }

    /// Log-likelihood of `x` under the current prediction.
    pub fn loglik(&self, state: &MeanState<T>, x: &[T]) -> Result<T> {
        gaussian_loglik(x, &self.predict(state), &self.sigma)
    }

    /// Chains a per-dimension score `g = ∂LL/∂μ` through the linear predictor.
    pub fn gradient_from_score(&self, state: &MeanState<T>, score: &[T]) -> MeanGradient<T> {
        let mut lag_weights: Vec<Matrix<T>> =
            (1..self.lag).map(|_| Matrix::zeros(self.dim)).collect();
        for (delta, g) in lag_weights.iter_mut().enumerate() {
            g.add_outer(T::one(), score, state.lagged(delta + 1));
        }
        let mut trace_weights: Vec<Matrix<T>> = self
            .lambdas
            .iter()
            .map(|_| Matrix::zeros(self.dim))
            .collect();
        for (k, g) in trace_weights.iter_mut().enumerate() {
            g.add_outer(T::one(), score, state.trace(k));
        }
        MeanGradient {
            bias: score.to_vec(),
            lag_weights,
            trace_weights,
            sigma: vec![T::zero(); self.dim],
        }
    }

    /// Analytic gradient of the Gaussian log-likelihood at observation `x`.
    pub fn loglik_gradient(&self, state: &MeanState<T>, x: &[T]) -> Result<MeanGradient<T>> {
        self.check_obs(x)?;
        let mu = self.predict(state);
        let score: Vec<T> = x
            .iter()
            .zip(&mu)
            .zip(&self.sigma)
            .map(|((&xj, &mj), &sj)| (xj - mj) / (sj * sj))
            .collect();
        let mut grad = self.gradient_from_score(state, &score);
        for (j, gs) in grad.sigma.iter_mut().enumerate() {
            let s = self.sigma[j];
            let e = x[j] - mu[j];
            *gs = -s.recip() + e * e / (s * s * s);
        }
        Ok(grad)
    }

    /// One gradient-ascent step of size `lr` on the log-likelihood.
    /// Returns the residual `x − μ` measured before the update.
    pub fn sgd_step(
        &mut self,
        state: &MeanState<T>,
        x: &[T],
        lr: T,
        update_sigma: bool,
    ) -> Result<Vec<T>> {
        let mu = self.predict(state);
        let grad = self.loglik_gradient(state, x)?;
        self.apply_gradient(&grad, lr, update_sigma)?;
        Ok(x.iter().zip(&mu).map(|(&a, &b)| a - b).collect())
    }

    /// `θ += lr · ∇θ`. Rejects non-finite gradients without touching the model.
    pub fn apply_gradient(
        &mut self,
        grad: &MeanGradient<T>,
        lr: T,
        update_sigma: bool,
    ) -> Result<()> {
        let finite = grad.bias.iter().all(|v| v.is_finite())
            && grad
                .lag_weights
                .iter()
                .chain(&grad.trace_weights)
                .all(Matrix::is_finite)
            && (!update_sigma || grad.sigma.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(DybmError::Diverged(
                "non-finite gradient; lower the learning rate".into(),
            ));
        }
        let step = |p: &mut [T], g: &[T]| p.iter_mut().zip(g).for_each(|(p, &g)| *p = *p + lr * g);
        step(&mut self.bias, &grad.bias);
        for (w, g) in self.lag_weights.iter_mut().zip(&grad.lag_weights) {
            step(&mut w.data, &g.data);
        }
        for (u, g) in self.trace_weights.iter_mut().zip(&grad.trace_weights) {
            step(&mut u.data, &g.data);
        }
        if update_sigma {
            let mut sigma = self.sigma.clone();
            step(&mut sigma, &grad.sigma);
            if sigma.iter().any(|&s| !(s > T::zero())) {
                return Err(DybmError::Diverged(
                    "sigma update left the positive range".into(),
                ));
            }
            self.sigma = sigma;
        }
        self.check_finite()
    }

    /// Online training over `epochs` passes; the state is reset at the start
    /// of each pass while parameters persist. Returns one prediction per step
    /// according to `cfg.record` (nothing when `epochs == 0`).
    pub fn train_online(&mut self, series: &[Vec<T>], cfg: &TrainConfig<T>) -> Result<Vec<Vec<T>>> {
        cfg.validate()?;
        if series.is_empty() {
            return Err(DybmError::Degenerate("training series is empty".into()));
        }
        let mut recorded = Vec::new();
        for epoch in 0..cfg.epochs {
            let last = epoch + 1 == cfg.epochs;
            let mut state = self.initial_state();
            for x in series {
                if last && cfg.record == RecordMode::LastEpoch {
                    recorded.push(self.predict(&state));
                }
                self.sgd_step(&state, x, cfg.learning_rate, cfg.update_sigma)?;
                state.advance(x, &self.lambdas)?;
            }
        }
        if cfg.epochs > 0 && cfg.record == RecordMode::FinalPass {
            recorded = self.predict_series(series)?;
        }
        Ok(recorded)
    }

    /// Prediction-only pass from a zero state.
    pub fn predict_series(&self, series: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(series.len());
        for x in series {
            self.check_obs(x)?;
            out.push(self.predict(&state));
            state.advance(x, &self.lambdas)?;
        }
        Ok(out)
    }

    fn check_obs(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(DybmError::Shape(format!(
                "observation has {} values, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        let ok = self.bias.iter().chain(&self.sigma).all(|v| v.is_finite())
            && self
                .lag_weights
                .iter()
                .chain(&self.trace_weights)
                .all(Matrix::is_finite);
        if ok {
            Ok(())
        } else {
            Err(DybmError::Diverged(
                "model parameters became non-finite".into(),
            ))
        }
    }
}
