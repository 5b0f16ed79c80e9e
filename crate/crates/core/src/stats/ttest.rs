//! Welch's unequal-variance t-test.

use serde::{Deserialize, Serialize};

use super::special::student_t_two_tailed;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    /// (mean(a) − mean(b)) / sqrt(va/na + vb/nb).
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-tailed p-value.
    pub p: f64,
    /// Both groups had zero variance and different means.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (m, ss / (n - 1.0))
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(invalid("t-test needs at least two values per group"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test input".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            WelchTest {
                t: 0.0,
                df: na + nb - 2.0,
                p: 1.0,
                degenerate: false,
            }
        } else {
            WelchTest {
                t: diff.signum() * f64::INFINITY,
                df: na + nb - 2.0,
                p: f64::MIN_POSITIVE,
                degenerate: true,
            }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: student_t_two_tailed(t, df),
        degenerate: false,
    })
}
