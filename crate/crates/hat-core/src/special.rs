//! Special functions backing the p-value constructors: regularized
//! incomplete gamma (chi-square CDF), regularized incomplete beta (F CDF),
//! and the standard normal CDF.
//!
//! The incomplete gamma uses the series expansion for `x < a + 1` and a
//! modified-Lentz continued fraction otherwise; both are evaluated to
//! machine precision (well inside the 1e-12 absolute target).

use crate::error::{HatError, Result};

const MAX_ITER: usize = 500;
const TINY: f64 = 1e-300;

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`; requires `a > 0`, `x >= 0`.
pub fn lower_regularized_gamma(a: f64, x: f64) -> Result<f64> {
    Ok(reg_gamma_pair(a, x)?.0)
}

/// `(P(a, x), Q(a, x))` computed together so neither side loses precision to
/// cancellation.
fn reg_gamma_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    if a <= 0.0 || x < 0.0 || !a.is_finite() || !x.is_finite() {
        return Err(HatError::InvalidInput(format!(
            "incomplete gamma domain: a = {a}, x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    let prefactor = log_prefactor.exp();
    if x < a + 1.0 {
        let p = gamma_series(a, x, prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = gamma_cf(a, x, prefactor)?;
        Ok((1.0 - q, q))
    }
}

/// Series for P(a, x) = prefactor * sum_n x^n / (a (a+1) ... (a+n)).
fn gamma_series(a: f64, x: f64, prefactor: f64) -> Result<f64> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(prefactor * sum);
        }
    }
    Err(HatError::NonConvergence("incomplete gamma series".into()))
}

/// Modified-Lentz continued fraction for Q(a, x).
fn gamma_cf(a: f64, x: f64, prefactor: f64) -> Result<f64> {
    let b0 = x + 1.0 - a;
    let mut f = if b0.abs() < TINY { TINY } else { b0 };
    let mut c = f;
    let mut d = 0.0f64;
    for n in 1..=MAX_ITER {
        let nf = n as f64;
        let an = nf * (a - nf);
        let bn = x + 2.0 * nf + 1.0 - a;
        d = bn + an * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = bn + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(prefactor / f);
        }
    }
    Err(HatError::NonConvergence(
        "incomplete gamma continued fraction".into(),
    ))
}

/// Chi-square CDF with `df` degrees of freedom: `P(df/2, x/2)`.
pub fn chi2_cdf(x: f64, df: u64) -> Result<f64> {
    if df == 0 {
        return Err(HatError::InvalidInput("chi-square df must be >= 1".into()));
    }
    if x < 0.0 || !x.is_finite() {
        return Err(HatError::InvalidInput(format!(
            "chi-square CDF domain: x = {x}"
        )));
    }
    lower_regularized_gamma(df as f64 / 2.0, x / 2.0)
}

/// Standard normal CDF, via the incomplete gamma identity
/// `Phi(x) = (1 + sign(x) P(1/2, x^2/2)) / 2` with the complementary branch
/// evaluated directly for negative arguments.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if !x.is_finite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let (p, q) = reg_gamma_pair(0.5, 0.5 * x * x).expect("valid gamma arguments");
    if x >= 0.0 {
        0.5 + 0.5 * p
    } else {
        0.5 * q
    }
}

/// Regularized incomplete beta `I_x(a, b)` via the standard continued
/// fraction with the symmetry switch at `x = (a + 1)/(a + b + 2)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 || !(0.0..=1.0).contains(&x) {
        return Err(HatError::InvalidInput(format!(
            "incomplete beta domain: a = {a}, b = {b}, x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x)? / b)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0f64;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            return Ok(h);
        }
    }
    Err(HatError::NonConvergence(
        "incomplete beta continued fraction".into(),
    ))
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: u64, d2: u64) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(HatError::InvalidInput("F degrees of freedom must be >= 1".into()));
    }
    if x < 0.0 || !x.is_finite() {
        return Err(HatError::InvalidInput(format!("F CDF domain: x = {x}")));
    }
    let (d1, d2) = (d1 as f64, d2 as f64);
    reg_inc_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values evaluated with 50-digit arbitrary-precision
    // arithmetic and frozen here.
    const CHI2_4_DF5: f64 = 0.45058404864721976739416885516693969548484517509263;
    const CHI2_1_DF1: f64 = 0.68268949213708589717046509126407584495582593345321;
    const CHI2_32_DF10: f64 = 0.023682278049311690904570800749246039132488767076976;
    const PHI_196: f64 = 0.97500210485177956586341573095916280997750022093812;
    const PHI_M05: f64 = 0.30853753872598689636229538939166226011639782444542;
    const PHI_25: f64 = 0.99379033467422386483302189542580777887210225307691;
    const PHI_1: f64 = 0.8413447460685429485852325456320379224779129667266;
    const F_15_2_10: f64 = 0.73067092565709560912810098762971561543040132725368;
    const F_07_3_5: f64 = 0.40877803582338259351272206592587202165519792350726;

    #[test]
    fn chi2_reference_values() {
        assert_eq!(chi2_cdf(0.0, 5).unwrap(), 0.0);
        assert!((chi2_cdf(4.0, 5).unwrap() - CHI2_4_DF5).abs() < 1e-14);
        assert!((chi2_cdf(1.0, 1).unwrap() - CHI2_1_DF1).abs() < 1e-14);
        assert!((chi2_cdf(3.2, 10).unwrap() - CHI2_32_DF10).abs() < 1e-14);
        // Closed form at df = 2: F(x) = 1 - exp(-x/2).
        let x = 2.0 * 2.0f64.ln();
        assert!((chi2_cdf(x, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(chi2_cdf(-1.0, 3).is_err());
        assert!(chi2_cdf(1.0, 0).is_err());
    }

    #[test]
    fn normal_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - PHI_196).abs() < 1e-14);
        assert!((normal_cdf(-0.5) - PHI_M05).abs() < 1e-14);
        assert!((normal_cdf(2.5) - PHI_25).abs() < 1e-14);
        assert!((normal_cdf(1.0) - PHI_1).abs() < 1e-14);
        for x in [0.1, 0.7, 1.3, 2.9, 5.0, 8.0] {
            assert!((normal_cdf(-x) - (1.0 - normal_cdf(x))).abs() < 1e-14);
        }
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn f_reference_values() {
        assert!((f_cdf(1.5, 2, 10).unwrap() - F_15_2_10).abs() < 1e-13);
        assert!((f_cdf(0.7, 3, 5).unwrap() - F_07_3_5).abs() < 1e-13);
        assert_eq!(f_cdf(0.0, 2, 2).unwrap(), 0.0);
    }

    #[test]
    fn ln_gamma_integers() {
        // Gamma(n) = (n-1)!
        let mut fact = 1.0f64;
        for n in 1..15u32 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * (1.0 + fact.ln().abs()));
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
    }
}
