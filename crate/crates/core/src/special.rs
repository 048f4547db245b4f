//! Gamma-family special functions, generic over the scalar type.

use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_count(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Digamma Ψ(x) = d/dx ln Γ(x) for `x > 0`.
///
/// Shifts the argument above 10 with Ψ(x) = Ψ(x+1) − 1/x, then applies the
/// asymptotic Bernoulli series.
pub fn digamma<T: Scalar>(x: T) -> T {
    let mut x = x;
    let mut shift = T::zero();
    let ten = T::lit(10.0);
    while x < ten {
        shift = shift - x.recip();
        x = x + T::one();
    }
    let inv2 = (x * x).recip();
    // B_{2n} / (2n) for n = 1..7, highest order first for Horner
    let series = [
        -1.0 / 12.0,
        1.0 / 120.0,
        -1.0 / 252.0,
        1.0 / 240.0,
        -1.0 / 132.0,
        691.0 / 32_760.0,
        -1.0 / 12.0,
    ];
    let mut tail = T::zero();
    for &c in series.iter().rev() {
        tail = (tail + T::lit(c)) * inv2;
    }
    shift + x.ln() - T::lit(0.5) / x + tail
}
