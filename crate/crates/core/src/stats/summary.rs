//! Bonferroni adjustment, the sign test and robust summaries.

use super::special::ln_gamma;

/// min(1, p · m).
pub fn bonferroni_one(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

pub fn bonferroni(p_raw: &[f64], m: usize) -> Vec<f64> {
    debug_assert!(m >= p_raw.len());
    p_raw.iter().map(|&p| bonferroni_one(p, m)).collect()
}

/// One-sided sign test: P(X ≥ wins) for X ~ Binomial(n, 1/2).
pub fn sign_test(wins: usize, n: usize) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    if wins > n {
        return 0.0;
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    let ln_nf = ln_gamma(n as f64 + 1.0);
    (wins..=n)
        .map(|k| {
            (ln_nf - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0) + ln_half_n).exp()
        })
        .sum::<f64>()
        .min(1.0)
}

pub fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Sample standard deviation (n − 1); 0 for a single value.
pub fn sample_sd(x: &[f64]) -> Option<f64> {
    let m = mean(x)?;
    if x.len() == 1 {
        return Some(0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (x.len() - 1) as f64).sqrt())
}
