//! Special functions for the t distribution.

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
        let s = std::f64::consts::PI / (std::f64::consts::PI * x).sin();
        return s.ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for I_x(a, b), modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=100_000 {
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
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b). `one_minus_x` is passed
/// separately so callers can supply it without cancellation.
pub fn regularized_beta(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * one_minus_x.ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, one_minus_x) / b
    }
}

/// P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    let denom = df + t2;
    regularized_beta(0.5 * df, 0.5, df / denom, t2 / denom).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_integers_and_half() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!(
                (ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0),
                "n={n}"
            );
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn beta_closed_forms() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a.
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((regularized_beta(1.0, 1.0, x, 1.0 - x) - x).abs() < 1e-14);
            assert!((regularized_beta(3.5, 1.0, x, 1.0 - x) - x.powf(3.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn t_tails_closed_forms() {
        // df = 1 is Cauchy: p = 1 - 2 atan(|t|)/π.
        for &t in &[0.0, 0.5, 1.0, 3.0, 40.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!(
                (student_t_two_tailed(t, 1.0) - exact).abs() < 1e-13,
                "t={t}"
            );
        }
        // df = 2: p = 1 - |t| / sqrt(2 + t²).
        for &t in &[0.1f64, 1.0, 2.5, 10.0] {
            let exact = 1.0 - t / (2.0 + t * t).sqrt();
            assert!(
                (student_t_two_tailed(t, 2.0) - exact).abs() < 1e-13,
                "t={t}"
            );
        }
        assert_eq!(student_t_two_tailed(f64::INFINITY, 5.0), 0.0);
        assert_eq!(student_t_two_tailed(0.0, 5.0), 1.0);
    }
}
