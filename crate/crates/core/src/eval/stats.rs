use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    /// Mean of `b - a`.
    pub mean_diff: f64,
    /// Infinite (signed) when every difference is the same nonzero value.
    pub t: f64,
    pub p_two_sided: f64,
    /// Number of comparisons used for the correction.
    pub m: usize,
    pub p_bonferroni: f64,
    pub significant_at_05: bool,
}

/// Paired two-sided t-test of `b` against `a` over the same topics, with a
/// Bonferroni correction for `m` comparisons.
pub fn paired_ttest(a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>, m: usize) -> Result<TTest, EvalError> {
    let only_a: Vec<u32> = a.keys().filter(|t| !b.contains_key(t)).copied().collect();
    let only_b: Vec<u32> = b.keys().filter(|t| !a.contains_key(t)).copied().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(EvalError::TopicMismatch { only_a, only_b });
    }
    if m == 0 {
        return Err(EvalError::Invalid("comparison count m must be at least 1".into()));
    }
    let d: Vec<f64> = a.iter().map(|(t, x)| b[t] - x).collect();
    let n = d.len();
    if n < 2 {
        return Err(EvalError::TooFewTopics(n));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let (t, p) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0)
    } else if sd == 0.0 {
        (f64::INFINITY.copysign(mean), 0.0)
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        (t, student_t_two_sided(t, (n - 1) as f64))
    };
    let p_bonferroni = (p * m as f64).min(1.0);
    Ok(TTest { n, mean_diff: mean, t, p_two_sided: p, m, p_bonferroni, significant_at_05: p_bonferroni < 0.05 })
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// I_x(a, b), by the continued fraction evaluated with the modified Lentz method.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
