//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

/// Central finite difference of `f` at `x`.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with the denominator floored at `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Eligibility trace by definition: `Σ_{s ≤ t−d} λ^{t−s−d} x_s`, where
/// `history[s-1] = x_s` and values before `s = 1` are zero.
pub fn trace_direct_sum(history: &[f64], t: usize, d: usize, lambda: f64) -> f64 {
    if t < d + 1 {
        return 0.0;
    }
    (1..=t - d)
        .map(|s| lambda.powi((t - s - d) as i32) * history[s - 1])
        .sum()
}

/// Variance-trace by definition: `Σ_{i ≥ d} λ^{i−d+1} e²_{t−1−i}` with
/// `errors[s-1] = e_s`, zero before `s = 1`.
pub fn var_trace_direct_sum(errors: &[f64], t: usize, d: usize, lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut i = d;
    while t >= 2 + i {
        let s = t - 1 - i;
        sum += lambda.powi((i - d + 1) as i32) * errors[s - 1] * errors[s - 1];
        i += 1;
    }
    sum
}

/// VAR(p) one-step prediction `b + Σ_δ W[δ] x_{t−δ}` with zero pre-sample.
/// `weights[δ-1][i][j]`.
pub fn var_predict(bias: &[f64], weights: &[Vec<Vec<f64>>], history: &[Vec<f64>]) -> Vec<f64> {
    let mut mu = bias.to_vec();
    for (delta, w) in weights.iter().enumerate() {
        let lag = delta + 1;
        if history.len() < lag {
            continue;
        }
        let x = &history[history.len() - lag];
        for (i, row) in w.iter().enumerate() {
            mu[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    mu
}
