use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// Train / validation / test fractions.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Shuffles the samples under `seed` and cuts them into ⌊f₀·n⌋ training,
/// ⌈f₂·n⌉ test and the remaining validation samples, which keeps every
/// subset within one sample of its fraction.
pub fn split_samples(
    sample_ids: &[String],
    seed: u64,
    fractions: (f64, f64, f64),
) -> Result<SplitAssignment> {
    let n = sample_ids.len();
    if n < 10 {
        return Err(invalid(format!(
            "splitting needs at least 10 samples, got {n}"
        )));
    }
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(invalid(format!(
            "split fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    // The small offsets keep exact products such as 0.1 * 30 from rounding the wrong way.
    let n_train = (ft * n as f64 + 1e-9).floor() as usize;
    let n_test = ((fs * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n - n_train);
    let n_val = n - n_train - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let pick = |r: &[usize]| r.iter().map(|&i| sample_ids[i].clone()).collect::<Vec<_>>();
    Ok(SplitAssignment {
        seed,
        train_ids: pick(&order[..n_train]),
        validation_ids: pick(&order[n_train..n_train + n_val]),
        test_ids: pick(&order[n_train + n_val..]),
    })
}

impl SplitAssignment {
    /// Renders the assignment as a two-column `sample_id`/`subset` table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sample_id\tsubset\n");
        for (ids, tag) in [
            (&self.train_ids, "train"),
            (&self.validation_ids, "validation"),
            (&self.test_ids, "test"),
        ] {
            for id in ids {
                out.push_str(id);
                out.push('\t');
                out.push_str(tag);
                out.push('\n');
            }
        }
        out
    }
}
