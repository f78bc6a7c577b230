//! Log-gamma, log-beta, the regularized incomplete beta function and the
//! Student t / Fisher F distribution functions built on it.

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Stirling-series remainder `ln Γ(x) - [(x-½)ln x - x + ½ln 2π]`, x ≥ 10.
fn stirling_correction(x: f64) -> f64 {
    // B_{2k} / (2k (2k-1)) for k = 1..8
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut sum = 0.0;
    for c in C.iter().rev() {
        sum = sum * inv2 + c;
    }
    sum * inv
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    // Γ(z) = Γ(z+n) / (z (z+1) ... (z+n-1))
    let mut prod = 1.0;
    while z < 10.0 {
        prod *= z;
        z += 1.0;
        if prod > 1e280 {
            shift += prod.ln();
            prod = 1.0;
        }
    }
    shift += prod.ln();
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + stirling_correction(z) - shift
}

/// ln B(a, b), arranged to avoid cancellation when either argument is large.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, big) = if a < b { (a, b) } else { (b, a) };
    if small >= 10.0 {
        let sum = small + big;
        -0.5 * sum.ln() + LN_SQRT_2PI
            + (small - 0.5) * (small / sum).ln()
            + (big - 0.5) * (-(small / big).ln_1p())
            + stirling_correction(small)
            + stirling_correction(big)
            - stirling_correction(sum)
    } else if big >= 10.0 {
        // ln Γ(big) - ln Γ(big + small) via the Stirling form
        let sum = small + big;
        let ratio = -(big - 0.5) * (small / big).ln_1p() - small * sum.ln()
            + small
            + stirling_correction(big)
            - stirling_correction(sum);
        ln_gamma(small) + ratio
    } else {
        ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
    }
}

/// Continued fraction for I_x(a,b) (modified Lentz), valid for
/// x < (a+1)/(a+b+2). `y` must equal 1 - x.
fn beta_cf(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
            return Ok(ln_front.exp() * h / a);
        }
    }
    Err(Error::Domain(format!(
        "incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )))
}

/// I_x(a, b) given both `x` and `y = 1 - x`; passing `y` separately keeps
/// full precision when x is close to 1.
pub fn reg_inc_beta_pair(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("beta parameters must be positive, got a={a}, b={b}")));
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("x={x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        beta_cf(a, b, x, y)
    } else {
        Ok(1.0 - beta_cf(b, a, y, x)?)
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    reg_inc_beta_pair(a, b, x, 1.0 - x)
}

fn check_df(df: f64) -> Result<()> {
    if df.is_finite() && df > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("degrees of freedom must be positive and finite, got {df}")))
    }
}

/// `P(T > |t|)` for Student's t, i.e. one tail.
fn t_tail(t: f64, df: f64) -> Result<f64> {
    let t2 = t * t;
    let denom = df + t2;
    Ok(0.5 * reg_inc_beta_pair(0.5 * df, 0.5, df / denom, t2 / denom)?)
}

/// Student's t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("t must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let tail = t_tail(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided p-value `P(|T| ≥ |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Err(Error::Domain("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * t_tail(t, df)?).min(1.0))
}

/// Quantile of Student's t by bisection on [`t_cdf`].
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must be in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t_cdf(lo, df)? > p {
        lo *= 2.0;
        if lo < -1e300 {
            break;
        }
    }
    while t_cdf(hi, df)? < p {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn f_args(f: f64, df1: f64, df2: f64) -> Result<(f64, f64)> {
    check_df(df1)?;
    check_df(df2)?;
    if !f.is_finite() || f < 0.0 {
        return Err(Error::Domain(format!("F statistic must be finite and non-negative, got {f}")));
    }
    let denom = df1 * f + df2;
    Ok((df1 * f / denom, df2 / denom))
}

/// Fisher F cumulative distribution function.
pub fn f_cdf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    let (x, y) = f_args(f, df1, df2)?;
    reg_inc_beta_pair(0.5 * df1, 0.5 * df2, x, y)
}

/// Upper tail `P(F ≥ f)`.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    let (x, y) = f_args(f, df1, df2)?;
    reg_inc_beta_pair(0.5 * df2, 0.5 * df1, y, x)
}
