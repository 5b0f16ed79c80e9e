//! Comparison of a drug's most sensitive and most resistant predicted
//! samples: cancer composition, mutation rates and expression.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, GeneMatrix, PredictionMatrix};
use crate::error::{invalid, Error, Result};
use crate::stats::{sample_sd, welch_t_test};

/// round(fraction · n), at least 1 and at most n / 2.
pub fn extreme_group_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).max(1).min(n / 2)
}

/// Lowest and highest predicted samples, `extreme_group_size` each.
/// Ties are ordered by sample id.
pub fn extreme_groups(
    values: &[f64],
    ids: &[String],
    fraction: f64,
) -> Result<(Vec<String>, Vec<String>)> {
    if values.len() != ids.len() {
        return Err(invalid("prediction row and sample ids differ in length"));
    }
    if ids.len() < 2 {
        return Err(invalid("extreme groups need at least two samples"));
    }
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(invalid("extreme-group fraction must lie in (0, 0.5]"));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .total_cmp(&values[b])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let k = extreme_group_size(ids.len(), fraction);
    let sensitive = order[..k].iter().map(|&i| ids[i].clone()).collect();
    let resistant = order[order.len() - k..]
        .iter()
        .map(|&i| ids[i].clone())
        .collect();
    Ok((sensitive, resistant))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRow {
    pub cancer: String,
    pub sensitive_fraction: f64,
    pub resistant_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationDiff {
    pub gene: String,
    pub rate_sensitive: f64,
    pub rate_resistant: f64,
}

impl MutationDiff {
    pub fn difference(&self) -> f64 {
        self.rate_sensitive - self.rate_resistant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionDiff {
    pub gene: String,
    pub t: f64,
    pub p: f64,
    pub mean_sensitive: f64,
    pub sd_sensitive: f64,
    pub mean_resistant: f64,
    pub sd_resistant: f64,
}

impl ExpressionDiff {
    pub fn up_in_sensitive(&self) -> bool {
        self.mean_sensitive > self.mean_resistant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    pub drug: String,
    pub sensitive_ids: Vec<String>,
    pub resistant_ids: Vec<String>,
    pub composition: Vec<CompositionRow>,
    /// Top genes by |rate difference|, largest first.
    pub mutations: Vec<MutationDiff>,
    /// Mean number of mutations per sample among the listed genes.
    pub burden_sensitive: f64,
    pub burden_resistant: f64,
    /// Top genes by ascending Welch p.
    pub expression: Vec<ExpressionDiff>,
    pub n_zero_variance_skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    pub fraction: f64,
    pub top_n_mut: usize,
    pub top_n_expr: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            fraction: 0.01,
            top_n_mut: 10,
            top_n_expr: 300,
        }
    }
}

fn columns(ids: &[String], index: &HashMap<&str, usize>) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("sample '{id}' not in cohort")))
        })
        .collect()
}

/// Profiles the extreme groups of `drug` in a cohort whose predictions
/// are `pred` (same sample order as `bundle`).
pub fn profile_groups(
    pred: &PredictionMatrix,
    drug: &str,
    bundle: &DatasetBundle,
    options: &ProfileOptions,
) -> Result<GroupProfile> {
    if pred.sample_ids() != bundle.sample_ids() {
        return Err(invalid(
            "predictions and cohort must list the same samples in the same order",
        ));
    }
    let d = pred
        .drug_ids()
        .iter()
        .position(|x| x == drug)
        .ok_or_else(|| Error::Data(format!("drug '{drug}' not in predictions")))?;
    let row = pred.values().row(d).to_vec();
    let (sensitive_ids, resistant_ids) = extreme_groups(&row, pred.sample_ids(), options.fraction)?;
    let index: HashMap<&str, usize> = bundle
        .sample_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let sens = columns(&sensitive_ids, &index)?;
    let res = columns(&resistant_ids, &index)?;
    let k = sens.len() as f64;

    let mut comp: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for &i in &sens {
        comp.entry(&bundle.metadata[i].cancer_type).or_default().0 += 1;
    }
    for &i in &res {
        comp.entry(&bundle.metadata[i].cancer_type).or_default().1 += 1;
    }
    let composition = comp
        .into_iter()
        .map(|(c, (s, r))| CompositionRow {
            cancer: c.to_string(),
            sensitive_fraction: s as f64 / k,
            resistant_fraction: r as f64 / k,
        })
        .collect();

    let mv = bundle.mutation.values();
    let mut mutations: Vec<MutationDiff> = bundle
        .mutation
        .gene_ids()
        .iter()
        .enumerate()
        .map(|(g, gene)| MutationDiff {
            gene: gene.clone(),
            rate_sensitive: sens.iter().map(|&i| mv[[g, i]]).sum::<f64>() / k,
            rate_resistant: res.iter().map(|&i| mv[[g, i]]).sum::<f64>() / k,
        })
        .collect();
    mutations.sort_by(|a, b| {
        b.difference()
            .abs()
            .total_cmp(&a.difference().abs())
            .then_with(|| a.gene.cmp(&b.gene))
    });
    mutations.truncate(options.top_n_mut);
    let burden_sensitive = mutations.iter().map(|m| m.rate_sensitive).sum();
    let burden_resistant = mutations.iter().map(|m| m.rate_resistant).sum();

    let ev = bundle.expression.values();
    let mut expression = Vec::new();
    let mut skipped = 0;
    if sens.len() >= 2 {
        for (g, gene) in bundle.expression.gene_ids().iter().enumerate() {
            let a: Vec<f64> = sens.iter().map(|&i| ev[[g, i]]).collect();
            let b: Vec<f64> = res.iter().map(|&i| ev[[g, i]]).collect();
            let (sd_a, sd_b) = (sample_sd(&a).unwrap_or(0.0), sample_sd(&b).unwrap_or(0.0));
            if sd_a == 0.0 && sd_b == 0.0 {
                skipped += 1;
                continue;
            }
            let t = welch_t_test(&a, &b)?;
            expression.push(ExpressionDiff {
                gene: gene.clone(),
                t: t.t,
                p: t.p,
                mean_sensitive: a.iter().sum::<f64>() / k,
                sd_sensitive: sd_a,
                mean_resistant: b.iter().sum::<f64>() / k,
                sd_resistant: sd_b,
            });
        }
    } else {
        log::warn!("extreme groups of size 1: expression comparison skipped");
    }
    expression.sort_by(|a, b| {
        a.p.total_cmp(&b.p)
            .then_with(|| b.t.abs().total_cmp(&a.t.abs()))
            .then_with(|| a.gene.cmp(&b.gene))
    });
    expression.truncate(options.top_n_expr);

    Ok(GroupProfile {
        drug: drug.to_string(),
        sensitive_ids,
        resistant_ids,
        composition,
        mutations,
        burden_sensitive,
        burden_resistant,
        expression,
        n_zero_variance_skipped: skipped,
    })
}

impl GroupProfile {
    pub fn composition_tsv(&self) -> String {
        let mut out = String::from("cancer\tsensitive_fraction\tresistant_fraction\n");
        for c in &self.composition {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                c.cancer, c.sensitive_fraction, c.resistant_fraction
            ));
        }
        out
    }

    pub fn mutations_tsv(&self) -> String {
        let mut out = String::from("rank\tgene\trate_sensitive\trate_resistant\tdifference\n");
        for (i, m) in self.mutations.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                i + 1,
                m.gene,
                m.rate_sensitive,
                m.rate_resistant,
                m.difference()
            ));
        }
        out
    }

    pub fn expression_tsv(&self) -> String {
        let mut out = String::from(
            "rank\tgene\tt\tp\tdirection\tmean_sensitive\tsd_sensitive\tmean_resistant\tsd_resistant\n",
        );
        for (i, e) in self.expression.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                i + 1,
                e.gene,
                e.t,
                e.p,
                if e.up_in_sensitive() {
                    "up_in_sensitive"
                } else {
                    "up_in_resistant"
                },
                e.mean_sensitive,
                e.sd_sensitive,
                e.mean_resistant,
                e.sd_resistant
            ));
        }
        out
    }

    /// Group membership, burdens and counts as JSON.
    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "drug": self.drug,
            "group_size": self.sensitive_ids.len(),
            "sensitive_ids": self.sensitive_ids,
            "resistant_ids": self.resistant_ids,
            "burden_sensitive": self.burden_sensitive,
            "burden_resistant": self.burden_resistant,
            "n_mutation_genes": self.mutations.len(),
            "n_expression_genes": self.expression.len(),
            "n_zero_variance_skipped": self.n_zero_variance_skipped,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("summary serializes");
        s.push('\n');
        s
    }
}
