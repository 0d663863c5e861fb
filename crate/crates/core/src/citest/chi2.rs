//! Chi-squared quantiles via bisection on the regularized lower incomplete
//! gamma function.

use libm::{exp, fabs, lgamma, log, sqrt};

use super::CiError;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        series(a, x)
    } else {
        1.0 - continued_fraction(a, x)
    }
}

fn prefactor(a: f64, x: f64) -> f64 {
    exp(-x + a * log(x) - lgamma(a))
}

fn series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if fabs(del) < fabs(sum) * EPS {
            break;
        }
    }
    sum * prefactor(a, x)
}

/// Upper tail `Q(a, x)` by modified Lentz.
fn continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if fabs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < EPS {
            break;
        }
    }
    prefactor(a, x) * h
}

pub fn chi2_cdf(df: u64, x: f64) -> f64 {
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9).
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let low = 0.02425;
    if p < low {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Wilson–Hilferty approximation; used only to bracket the root.
fn wilson_hilferty(df: f64, p: f64) -> f64 {
    let v = 2.0 / (9.0 * df);
    let t = 1.0 - v + normal_quantile(p) * sqrt(v);
    (df * t * t * t).max(0.0)
}

/// The `alpha`-quantile of the chi-squared distribution with `df` degrees of
/// freedom.
pub fn chi2_quantile(df: u64, alpha: f64) -> Result<f64, CiError> {
    if df == 0 {
        return Err(CiError::ZeroDegreesOfFreedom);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CiError::InvalidAlpha(alpha));
    }
    let k = df as f64;
    let seed = wilson_hilferty(k, alpha);
    let mut lo = seed * 0.5;
    if chi2_cdf(df, lo) > alpha {
        lo = 0.0;
    }
    let mut hi = seed * 1.5 + 1.0;
    while chi2_cdf(df, hi) < alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(df, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_p_known_values() {
        // P(1, x) = 1 - e^{-x}
        for x in [0.1, 1.0, 3.0, 10.0] {
            assert!((gamma_p(1.0, x) - (1.0 - exp(-x))).abs() < 1e-14);
        }
        assert_eq!(gamma_p(2.0, 0.0), 0.0);
    }

    #[test]
    fn seed_is_close() {
        let wh = wilson_hilferty(10.0, 0.95);
        assert!((wh - 18.307).abs() < 0.1);
        assert!((normal_quantile(0.975) - 1.959_963_985).abs() < 1e-8);
    }
}
