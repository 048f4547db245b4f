//! Time-varying variance: the variance DyBM G-DyBM(d,k), the GARCH(p,q)
//! reference model, multi-step forecasts, and batch fitting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DybmError, Result};
use crate::scalar::Scalar;

/// Parameters of G-DyBM(d,k):
/// `σ²_t = v0 + Σ_{i=1}^d w_i e²_{t−i} + Σ_j u_j B_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VarModel<T> {
    pub d: usize,
    pub k: usize,
    pub lambdas: Vec<T>,
    pub v0: T,
    pub w: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Scalar> VarModel<T> {
    pub fn new(v0: T, w: Vec<T>, u: Vec<T>, lambdas: Vec<T>) -> Result<Self> {
        let m = Self {
            d: w.len(),
            k: u.len(),
            lambdas,
            v0,
            w,
            u,
        };
        m.validate()?;
        Ok(m)
    }

    /// Zero coefficients with the given lag count and decays.
    pub fn zeros(d: usize, lambdas: &[T]) -> Result<Self> {
        Self::new(
            T::zero(),
            vec![T::zero(); d],
            vec![T::zero(); lambdas.len()],
            lambdas.to_vec(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.w.len() != self.d {
            return Err(DybmError::Shape(format!(
                "need d >= 1 lag weights, got d={} w={}",
                self.d,
                self.w.len()
            )));
        }
        if self.u.len() != self.k || self.lambdas.len() != self.k {
            return Err(DybmError::Shape(format!(
                "k={} but {} trace weights and {} decays",
                self.k,
                self.u.len(),
                self.lambdas.len()
            )));
        }
        if let Some(l) = self
            .lambdas
            .iter()
            .find(|&&l| !(l > T::zero() && l < T::one()))
        {
            return invalid(format!("decay rates must lie in (0, 1), got {l}"));
        }
        let coefs = std::iter::once(&self.v0).chain(&self.w).chain(&self.u);
        if let Some(c) = coefs
            .clone()
            .find(|&&c| !(c >= T::zero()) || !c.is_finite())
        {
            return invalid(format!(
                "variance coefficients must be finite and nonnegative, got {c}"
            ));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> VarState<T> {
        VarState {
            err_fifo: vec![T::zero(); self.d].into(),
            traces: vec![T::zero(); self.k],
        }
    }

    pub fn predict(&self, state: &VarState<T>) -> T {
        let lags: T = self
            .w
            .iter()
            .zip(&state.err_fifo)
            .map(|(&w, &e2)| w * e2)
            .sum();
        let traces: T = self.u.iter().zip(&state.traces).map(|(&u, &b)| u * b).sum();
        self.v0 + lags + traces
    }

    /// One-step variance predictions σ²_t for every error `e_t`, each made
    /// before `e_t` is observed, starting from a zero history.
    pub fn filter(&self, errors: &[T]) -> Vec<T> {
        let mut state = self.initial_state();
        errors
            .iter()
            .map(|&e| {
                let s2 = self.predict(&state);
                state.advance(e, &self.lambdas);
                s2
            })
            .collect()
    }

    fn require_11(&self) -> Result<()> {
        if self.d != 1 || self.k != 1 {
            return invalid(format!(
                "closed-form forecasts need G-DyBM(1,1), got ({}, {})",
                self.d, self.k
            ));
        }
        Ok(())
    }
}

/// Squared-error FIFO (newest first) and one variance trace per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct VarState<T> {
    err_fifo: VecDeque<T>,
    traces: Vec<T>,
}

impl<T: Scalar> VarState<T> {
    /// `e²_{t−i}` for i = 1..d.
    pub fn lagged(&self, i: usize) -> T {
        self.err_fifo[i - 1]
    }

    pub fn trace(&self, j: usize) -> T {
        self.traces[j]
    }

    /// Dequeues `e²_{t−d}`, folds `B_j ← λ_j (e²_{t−d} + B_j)`, enqueues `e_t²`.
    pub fn advance(&mut self, e: T, lambdas: &[T]) {
        let oldest = self.err_fifo.pop_back().unwrap_or_else(T::zero);
        for (b, &l) in self.traces.iter_mut().zip(lambdas) {
            *b = l * (oldest + *b);
        }
        self.err_fifo.push_front(e * e);
    }
}

/// GARCH(p,q): `σ²_t = a0 + Σ a_i e²_{t−i} + Σ b_i σ²_{t−i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GarchParams<T> {
    pub p: usize,
    pub q: usize,
    pub a0: T,
    pub a: Vec<T>,
    pub b: Vec<T>,
}

/// Pre-sample variance used by [`garch_filter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GarchInit<T> {
    /// Population variance of the error sequence.
    SampleVariance,
    Value(T),
}

impl<T: Scalar> GarchParams<T> {
    pub fn new(a0: T, a: Vec<T>, b: Vec<T>) -> Result<Self> {
        let g = Self {
            p: a.len(),
            q: b.len(),
            a0,
            a,
            b,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn garch11(a0: T, a1: T, b1: T) -> Result<Self> {
        Self::new(a0, vec![a1], vec![b1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.p || self.b.len() != self.q {
            return Err(DybmError::Shape(
                "GARCH orders disagree with coefficient counts".into(),
            ));
        }
        if !(self.a0 > T::zero()) || !self.a0.is_finite() {
            return invalid(format!("a0 must be positive, got {}", self.a0));
        }
        if let Some(c) = self
            .a
            .iter()
            .chain(&self.b)
            .find(|&&c| !(c >= T::zero()) || !c.is_finite())
        {
            return invalid(format!("GARCH coefficients must be nonnegative, got {c}"));
        }
        Ok(())
    }

    pub fn persistence(&self) -> T {
        self.a.iter().chain(&self.b).copied().sum()
    }

    /// Unconditional variance `a0 / (1 − Σa − Σb)`.
    pub fn long_run_variance(&self) -> Result<T> {
        let s = self.persistence();
        if s >= T::one() {
            return Err(DybmError::Nonstationary(format!("persistence {s} >= 1")));
        }
        Ok(self.a0 / (T::one() - s))
    }

    fn require_11(&self) -> Result<(T, T)> {
        if self.p != 1 || self.q != 1 {
            return invalid(format!(
                "expected GARCH(1,1), got GARCH({},{})",
                self.p, self.q
            ));
        }
        Ok((self.a[0], self.b[0]))
    }
}

/// One GARCH step from newest-first histories; missing entries count as 0.
pub fn garch_predict<T: Scalar>(params: &GarchParams<T>, e2_hist: &[T], s2_hist: &[T]) -> T {
    let arch: T = params.a.iter().zip(e2_hist).map(|(&a, &e2)| a * e2).sum();
    let garch: T = params.b.iter().zip(s2_hist).map(|(&b, &s2)| b * s2).sum();
    params.a0 + arch + garch
}

pub(crate) fn population_variance<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let n = T::from_count(xs.len());
    let m = xs.iter().copied().sum::<T>() / n;
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / n
}

/// GARCH variance sequence over `errors`: `σ²_0` is the initial value and
/// pre-sample variances equal it; pre-sample errors are zero.
pub fn garch_filter<T: Scalar>(
    params: &GarchParams<T>,
    errors: &[T],
    init: GarchInit<T>,
) -> Vec<T> {
    let s2_init = match init {
        GarchInit::SampleVariance => population_variance(errors),
        GarchInit::Value(v) => v,
    };
    let mut out: Vec<T> = Vec::with_capacity(errors.len());
    let mut e2_hist: Vec<T> = Vec::with_capacity(params.p);
    let mut s2_hist: Vec<T> = Vec::with_capacity(params.q);
    for t in 0..errors.len() {
        let s2 = if t == 0 {
            s2_init
        } else {
            e2_hist.clear();
            e2_hist.extend((1..=params.p).map(|i| {
                if t >= i {
                    errors[t - i] * errors[t - i]
                } else {
                    T::zero()
                }
            }));
            s2_hist.clear();
            s2_hist.extend((1..=params.q).map(|i| if t >= i { out[t - i] } else { s2_init }));
            garch_predict(params, &e2_hist, &s2_hist)
        };
        out.push(s2);
    }
    out
}

/// `σ²_{t+n} = σ̄² + (a1+b1)ⁿ (σ²_t − σ̄²)` for GARCH(1,1).
pub fn garch_forecast_n<T: Scalar>(params: &GarchParams<T>, sigma2_t: T, n: usize) -> Result<T> {
    let (a1, b1) = params.require_11()?;
    let lr = params.long_run_variance()?;
    if n == 0 {
        return Ok(sigma2_t);
    }
    Ok(lr + (a1 + b1).powi(exponent(n)) * (sigma2_t - lr))
}

fn exponent(n: usize) -> i32 {
    i32::try_from(n).expect("forecast horizon fits in i32")
}

/// G-DyBM(1,1) equal to the given GARCH(1,1):
/// `v0 = a0/(1−b1)`, `w1 = u1 = a1`, `λ1 = b1`.
pub fn map_garch_to_dybm11<T: Scalar>(g: &GarchParams<T>) -> Result<VarModel<T>> {
    let (a1, b1) = g.require_11()?;
    if b1 >= T::one() {
        return invalid(format!("b1 must be below 1, got {b1}"));
    }
    if b1 == T::zero() {
        return invalid("b1 = 0 leaves no trace mode (decay must lie in (0, 1))");
    }
    VarModel::new(g.a0 / (T::one() - b1), vec![a1], vec![a1], vec![b1])
}

/// Constants of the closed-form G-DyBM(1,1) forecast
/// `σ²_{t+n} = α + C0 + C1 r1ⁿ + C2 r2ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ForecastConstants<T> {
    pub alpha_c: T,
    pub beta_c: T,
    pub gamma_c: T,
    pub r1: T,
    pub r2: T,
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

/// Builds the forecast constants from the current variance `σ²_t` and the
/// last observed squared error `e²_{t−1}`.
///
/// Fails with [`DybmError::NoClosedForm`] on complex or repeated roots.
pub fn forecast_constants<T: Scalar>(
    model: &VarModel<T>,
    sigma2_t: T,
    e2_prev: T,
) -> Result<ForecastConstants<T>> {
    model.require_11()?;
    let (v0, w1, u1, l1) = (model.v0, model.w[0], model.u[0], model.lambdas[0]);
    let beta_c = w1 + l1;
    if beta_c >= T::one() {
        return Err(DybmError::Nonstationary(format!(
            "w1 + lambda1 = {beta_c} >= 1"
        )));
    }
    let alpha_c = v0 * (T::one() - l1) / (T::one() - beta_c);
    let gamma_c = l1 * (u1 - w1);
    let denom = T::one() - beta_c - gamma_c;
    if denom.abs() <= T::epsilon() {
        return Err(DybmError::Nonstationary("1 - beta - gamma vanishes".into()));
    }
    let disc = beta_c * beta_c + T::lit(4.0) * gamma_c;
    if disc < T::zero() {
        return Err(DybmError::NoClosedForm(format!(
            "complex roots (discriminant {disc})"
        )));
    }
    let sq = disc.sqrt();
    let (r1, r2) = if gamma_c == T::zero() {
        (beta_c, T::zero())
    } else {
        (T::lit(0.5) * (beta_c + sq), T::lit(0.5) * (beta_c - sq))
    };
    let gap = r1 - r2;
    if !(gap > T::epsilon().sqrt() * (r1.abs() + r2.abs())) {
        return Err(DybmError::NoClosedForm("repeated root".into()));
    }
    let c0 = gamma_c * alpha_c / denom;
    let s_t = sigma2_t - alpha_c - c0;
    let shock = gamma_c * e2_prev;
    let drift = c0 * (T::one() - beta_c);
    let c1 = (shock + r1 * s_t - drift) / gap;
    let c2 = if gamma_c == T::zero() {
        T::zero()
    } else {
        -(shock + r2 * s_t - drift) / gap
    };
    Ok(ForecastConstants {
        alpha_c,
        beta_c,
        gamma_c,
        r1,
        r2,
        c0,
        c1,
        c2,
    })
}

impl<T: Scalar> ForecastConstants<T> {
    /// `σ²_{t+n}`; `n = 0` reproduces `σ²_t`.
    pub fn forecast(&self, n: usize) -> T {
        let e = exponent(n);
        let mut s = self.alpha_c + self.c0 + self.c1 * self.r1.powi(e);
        if self.c2 != T::zero() {
            s = s + self.c2 * self.r2.powi(e);
        }
        s
    }

    /// Limit of the forecast as `n → ∞` for stationary roots.
    pub fn limit(&self) -> T {
        self.alpha_c + self.c0
    }
}

/// Multi-step G-DyBM(1,1) forecast by direct recursion. Valid for any roots.
///
/// `σ²_{t+1} = v0(1−λ) + (w+λ)σ²_t + λ(u−w)e²_{t−1}`, and for N ≥ 2 the
/// unobserved squared errors are replaced by their forecasts.
pub fn dybm_var_forecast_recursive<T: Scalar>(
    model: &VarModel<T>,
    sigma2_t: T,
    e2_prev: T,
    n: usize,
) -> Result<T> {
    Ok(*forecast_path_recursive(model, sigma2_t, e2_prev, n)?
        .last()
        .expect("path holds n+1 entries"))
}

/// Recursive forecasts for horizons `0..=n`.
pub fn forecast_path_recursive<T: Scalar>(
    model: &VarModel<T>,
    sigma2_t: T,
    e2_prev: T,
    n: usize,
) -> Result<Vec<T>> {
    model.require_11()?;
    let (v0, w1, u1, l1) = (model.v0, model.w[0], model.u[0], model.lambdas[0]);
    let base = v0 * (T::one() - l1);
    let beta_c = w1 + l1;
    let gamma_c = l1 * (u1 - w1);
    let mut path = Vec::with_capacity(n + 1);
    path.push(sigma2_t);
    let (mut prev, mut cur) = (e2_prev, sigma2_t);
    for _ in 0..n {
        let next = base + beta_c * cur + gamma_c * prev;
        prev = cur;
        cur = next;
        path.push(next);
    }
    Ok(path)
}

/// Settings of [`fit_variance_batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VarFitConfig<T> {
    pub l1_weight: T,
    pub iters: usize,
    /// Step as a fraction of the inverse Lipschitz constant of the
    /// (diagonally rescaled) objective; must lie in (0, 2).
    pub step: T,
}

impl<T: Scalar> Default for VarFitConfig<T> {
    fn default() -> Self {
        Self {
            l1_weight: T::zero(),
            iters: 20_000,
            step: T::one(),
        }
    }
}

/// Batch fit of G-DyBM(d,k) with fixed decays by projected gradient descent
/// on `Σ_t (σ̂²_t − e²_t)² + l1·‖θ‖₁` over `θ = (v0, w, u) ≥ 0`.
///
/// The objective is quadratic in θ, so the data enter through the Gram
/// matrix of the regressors `(1, e²_{t−1..t−d}, B_1..B_k)`. Gradient steps
/// run in coordinates rescaled by the Gram diagonal; the nonnegative orthant
/// is invariant under that rescaling. Returns the iterate with the lowest
/// objective.
pub fn fit_variance_batch<T: Scalar>(
    errors: &[T],
    d: usize,
    lambdas: &[T],
    cfg: &VarFitConfig<T>,
) -> Result<VarModel<T>> {
    let template = VarModel::zeros(d, lambdas)?;
    if errors.len() <= d + 10 {
        return Err(DybmError::Degenerate(format!(
            "need more than {} errors, got {}",
            d + 10,
            errors.len()
        )));
    }
    if !(cfg.step > T::zero() && cfg.step < T::lit(2.0)) {
        return invalid(format!("step must lie in (0, 2), got {}", cfg.step));
    }
    if !(cfg.l1_weight >= T::zero()) {
        return invalid("l1 weight must be nonnegative");
    }
    let dim = 1 + d + lambdas.len();

    // normal equations: G = ΦᵀΦ, c = Φᵀy, yy = yᵀy
    let mut gram = vec![T::zero(); dim * dim];
    let mut cross = vec![T::zero(); dim];
    let mut yy = T::zero();
    let mut state = template.initial_state();
    let mut phi = vec![T::zero(); dim];
    for (t, &e) in errors.iter().enumerate() {
        if t >= d {
            phi[0] = T::one();
            for (i, slot) in phi[1..=d].iter_mut().enumerate() {
                *slot = state.lagged(i + 1);
            }
            for j in 0..lambdas.len() {
                phi[1 + d + j] = state.trace(j);
            }
            let y = e * e;
            for a in 0..dim {
                cross[a] = cross[a] + phi[a] * y;
                for b in 0..dim {
                    gram[a * dim + b] = gram[a * dim + b] + phi[a] * phi[b];
                }
            }
            yy = yy + y * y;
        }
        state.advance(e, lambdas);
    }
    if !yy.is_finite() || gram.iter().any(|v| !v.is_finite()) {
        return Err(DybmError::Diverged(
            "error sequence overflows the objective".into(),
        ));
    }

    // rescale θ = D z with D_ii = 1/√G_ii
    let scale: Vec<T> = (0..dim)
        .map(|i| {
            let g = gram[i * dim + i];
            if g > T::zero() {
                g.sqrt().recip()
            } else {
                T::one()
            }
        })
        .collect();
    let scaled_gram: Vec<T> = (0..dim * dim)
        .map(|ij| gram[ij] * scale[ij / dim] * scale[ij % dim])
        .collect();
    let lipschitz = T::lit(2.0) * max_eigenvalue(&scaled_gram, dim);
    let eta = if lipschitz > T::zero() {
        cfg.step / lipschitz
    } else {
        cfg.step
    };

    let objective = |theta: &[T]| -> T {
        let mut quad = T::zero();
        for a in 0..dim {
            for b in 0..dim {
                quad = quad + theta[a] * gram[a * dim + b] * theta[b];
            }
        }
        let lin: T = theta.iter().zip(&cross).map(|(&t, &c)| t * c).sum();
        let l1: T = theta.iter().copied().sum();
        quad - T::lit(2.0) * lin + yy + cfg.l1_weight * l1
    };

    let n_rows = T::from_count(errors.len() - d);
    let mut theta = vec![T::zero(); dim];
    theta[0] = cross[0] / n_rows;
    let mut best = theta.clone();
    let mut best_j = objective(&theta);
    for _ in 0..cfg.iters {
        for a in 0..dim {
            let g_theta: T = (0..dim).map(|b| gram[a * dim + b] * theta[b]).sum::<T>();
            let grad = T::lit(2.0) * (g_theta - cross[a]) + cfg.l1_weight;
            // chain rule: ∂J/∂z_a = D_aa ∂J/∂θ_a, and θ_a = D_aa z_a
            theta[a] = (theta[a] - eta * scale[a] * scale[a] * grad).max(T::zero());
        }
        let j = objective(&theta);
        if !j.is_finite() {
            return Err(DybmError::Diverged("objective became non-finite".into()));
        }
        if j < best_j {
            best_j = j;
            best.copy_from_slice(&theta);
        }
    }
    VarModel::new(
        best[0],
        best[1..=d].to_vec(),
        best[1 + d..].to_vec(),
        lambdas.to_vec(),
    )
}

fn max_eigenvalue<T: Scalar>(sym: &[T], dim: usize) -> T {
    let mut v = vec![T::one(); dim];
    let mut lambda = T::zero();
    for _ in 0..500 {
        let mut next = vec![T::zero(); dim];
        for a in 0..dim {
            next[a] = (0..dim).map(|b| sym[a * dim + b] * v[b]).sum();
        }
        let norm = next.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        next.iter_mut().for_each(|x| *x = *x / norm);
        lambda = norm;
        v = next;
    }
    lambda
}

/// Gaussian quasi-log-likelihood `Σ −½ ln σ²_t − e²_t/(2σ²_t)` of a GARCH
/// variance path, or `None` when a variance is not positive.
pub fn garch_quasi_loglik<T: Scalar>(params: &GarchParams<T>, errors: &[T]) -> Option<T> {
    let s2 = garch_filter(params, errors, GarchInit::SampleVariance);
    let half = T::lit(0.5);
    let mut ll = T::zero();
    for (&e, &v) in errors.iter().zip(&s2) {
        if !(v > T::zero()) {
            return None;
        }
        ll = ll - half * v.ln() - e * e / (T::lit(2.0) * v);
    }
    Some(ll)
}

/// Upper bound on `a1 + b1` during QMLE.
pub const MAX_PERSISTENCE: f64 = 0.999;

/// GARCH(1,1) by Gaussian quasi-maximum likelihood.
///
/// A grid over `(a1, b1)` with `a0` set so the unconditional variance
/// matches the sample variance seeds a coordinate search over all three
/// coefficients. Deterministic.
pub fn fit_garch11_qmle<T: Scalar>(errors: &[T]) -> Result<GarchParams<T>> {
    if errors.len() < 100 {
        return Err(DybmError::Degenerate(format!(
            "need at least 100 errors, got {}",
            errors.len()
        )));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(DybmError::Degenerate(
            "errors contain non-finite values".into(),
        ));
    }
    let var = population_variance(errors);
    if !(var > T::zero()) {
        return Err(DybmError::Degenerate("errors have zero variance".into()));
    }
    let cap = T::lit(MAX_PERSISTENCE);
    let feasible = |a0: T, a1: T, b1: T| {
        a0 > T::zero() && a1 >= T::zero() && b1 >= T::zero() && a1 + b1 <= cap
    };
    let eval = |a0: T, a1: T, b1: T| -> Option<T> {
        if !feasible(a0, a1, b1) {
            return None;
        }
        let g = GarchParams {
            p: 1,
            q: 1,
            a0,
            a: vec![a1],
            b: vec![b1],
        };
        garch_quasi_loglik(&g, errors).filter(|v| v.is_finite())
    };

    let mut best: Option<(T, [T; 3])> = None;
    for ia in 0..=25 {
        let a1 = T::lit(0.02 * ia as f64);
        for ib in 0..=49 {
            let b1 = T::lit(0.02 * ib as f64);
            if a1 + b1 > cap {
                continue;
            }
            let a0 = var * (T::one() - a1 - b1);
            if let Some(ll) = eval(a0, a1, b1) {
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((ll, [a0, a1, b1]));
                }
            }
        }
    }
    let (mut best_ll, mut theta) =
        best.ok_or_else(|| DybmError::Degenerate("no feasible GARCH(1,1) start".into()))?;

    // coordinate search with shrinking steps; a0 moves on a relative scale
    let mut steps = [var * T::lit(0.05), T::lit(0.01), T::lit(0.01)];
    let floor = T::lit(1e-9);
    for _ in 0..20_000 {
        let mut improved = false;
        for c in 0..3 {
            for dir in [T::one(), -T::one()] {
                let mut cand = theta;
                cand[c] = cand[c] + dir * steps[c];
                if let Some(ll) = eval(cand[0], cand[1], cand[2]) {
                    if ll > best_ll {
                        best_ll = ll;
                        theta = cand;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s = *s * T::lit(0.5));
            if steps[1] < floor {
                break;
            }
        }
    }
    GarchParams::garch11(theta[0], theta[1], theta[2])
}
