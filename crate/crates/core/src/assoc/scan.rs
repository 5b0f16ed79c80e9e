//! Welch t-test scans of predicted IC₅₀ between mutated and wildtype
//! samples, with Bonferroni control over the tests one scan performs.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GeneMatrix, MutationMatrix, PredictionMatrix, SampleMetadata};
use crate::error::{invalid, Error, Result};
use crate::stats::{bonferroni_one, welch_t_test};

pub const PAN_CANCER: &str = "PANCAN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanThresholds {
    /// A gene is tested only when its mutation rate is strictly above this.
    pub min_rate: f64,
    /// Minimum mutated samples per cancer (per-cancer scans only).
    pub min_mut: usize,
    /// Records are kept when the adjusted p-value is strictly below this.
    pub alpha: f64,
}

impl Default for ScanThresholds {
    fn default() -> Self {
        Self {
            min_rate: 0.10,
            min_mut: 10,
            alpha: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sensitive,
    Resistant,
    None,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Sensitive => "sensitive",
            Direction::Resistant => "resistant",
            Direction::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub cancer: String,
    pub gene: String,
    pub drug: String,
    pub n_mut: usize,
    pub n_wt: usize,
    /// mean(mutated) − mean(wildtype) of predicted log IC₅₀.
    pub delta_ic50: f64,
    pub t_stat: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

impl AssociationRecord {
    /// Higher IC₅₀ in mutated samples means resistance.
    pub fn direction(&self) -> Direction {
        if self.delta_ic50 > 0.0 {
            Direction::Resistant
        } else if self.delta_ic50 < 0.0 {
            Direction::Sensitive
        } else {
            Direction::None
        }
    }
}

/// A (cancer, gene) pair that passed the gates and was tested on every drug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestedPair {
    pub cancer: String,
    pub gene: String,
    pub n_mut: usize,
    pub n_samples: usize,
}

impl TestedPair {
    pub fn rate(&self) -> f64 {
        self.n_mut as f64 / self.n_samples as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Significant records in (cancer, gene, drug) order.
    pub records: Vec<AssociationRecord>,
    /// Tests performed; the Bonferroni multiplier.
    pub n_tests: usize,
    pub pairs: Vec<TestedPair>,
    /// Cancers too small to test, with their sample counts.
    pub skipped_cancers: Vec<(String, usize)>,
}

/// Per-gene counts of modulated drugs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSummary {
    pub cancer: String,
    pub gene: String,
    pub mutation_rate: f64,
    pub n_modulated: usize,
    pub n_sensitive: usize,
    pub n_resistant: usize,
}

/// Per-cancer counts of tested and significant genes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancerSummary {
    pub cancer: String,
    pub n_genes_tested: usize,
    pub n_genes_significant: usize,
    pub n_drugs: usize,
    pub n_records: usize,
}

impl ScanResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "cancer\tgene\tdrug\tn_mut\tn_wt\tdelta_ic50\tt\tp_raw\tp_adj\tdirection\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.cancer,
                r.gene,
                r.drug,
                r.n_mut,
                r.n_wt,
                r.delta_ic50,
                r.t_stat,
                r.p_raw,
                r.p_adj,
                r.direction().as_str()
            ));
        }
        out
    }

    /// One row per tested (cancer, gene) pair, in pair order.
    pub fn gene_summary(&self) -> Vec<GeneSummary> {
        let mut counts: HashMap<(&str, &str), (usize, usize, usize)> = HashMap::new();
        for r in &self.records {
            let c = counts.entry((&r.cancer, &r.gene)).or_default();
            c.0 += 1;
            match r.direction() {
                Direction::Sensitive => c.1 += 1,
                Direction::Resistant => c.2 += 1,
                Direction::None => {}
            }
        }
        self.pairs
            .iter()
            .map(|p| {
                let (n, s, r) = counts
                    .get(&(p.cancer.as_str(), p.gene.as_str()))
                    .copied()
                    .unwrap_or_default();
                GeneSummary {
                    cancer: p.cancer.clone(),
                    gene: p.gene.clone(),
                    mutation_rate: p.rate(),
                    n_modulated: n,
                    n_sensitive: s,
                    n_resistant: r,
                }
            })
            .collect()
    }

    pub fn gene_summary_tsv(&self) -> String {
        let mut out =
            String::from("cancer\tgene\tmutation_rate\tn_modulated\tn_sensitive\tn_resistant\n");
        for g in self.gene_summary() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                g.cancer, g.gene, g.mutation_rate, g.n_modulated, g.n_sensitive, g.n_resistant
            ));
        }
        out
    }

    pub fn cancer_summary(&self) -> Vec<CancerSummary> {
        let mut by: BTreeMap<&str, CancerSummary> = BTreeMap::new();
        for p in &self.pairs {
            by.entry(&p.cancer)
                .or_insert_with(|| CancerSummary {
                    cancer: p.cancer.clone(),
                    n_genes_tested: 0,
                    n_genes_significant: 0,
                    n_drugs: 0,
                    n_records: 0,
                })
                .n_genes_tested += 1;
        }
        let mut genes: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
        let mut drugs: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
        for r in &self.records {
            genes.entry(&r.cancer).or_default().insert(&r.gene);
            drugs.entry(&r.cancer).or_default().insert(&r.drug);
            if let Some(s) = by.get_mut(r.cancer.as_str()) {
                s.n_records += 1;
            }
        }
        for (c, s) in by.iter_mut() {
            s.n_genes_significant = genes.get(c).map_or(0, |g| g.len());
            s.n_drugs = drugs.get(c).map_or(0, |d| d.len());
        }
        by.into_values().collect()
    }
}

struct Job {
    cancer: String,
    gene: usize,
    mutated: Vec<usize>,
    wildtype: Vec<usize>,
}

fn check_aligned(pred: &PredictionMatrix, mutation: &MutationMatrix) -> Result<()> {
    if pred.sample_ids() != mutation.sample_ids() {
        return Err(invalid(
            "predictions and mutations must list the same samples in the same order",
        ));
    }
    Ok(())
}

fn cancer_labels(pred: &PredictionMatrix, meta: &[SampleMetadata]) -> Result<Vec<String>> {
    let by_id: HashMap<&str, &str> = meta
        .iter()
        .map(|m| (m.sample_id.as_str(), m.cancer_type.as_str()))
        .collect();
    pred.sample_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|c| c.to_string())
                .ok_or_else(|| Error::Data(format!("sample '{id}' has no metadata")))
        })
        .collect()
}

fn run_jobs(
    pred: &PredictionMatrix,
    mutation: &MutationMatrix,
    jobs: Vec<Job>,
    alpha: f64,
) -> Result<ScanResult> {
    let values = pred.values();
    let n_drugs = pred.n_drugs();
    let tested: Vec<Vec<(usize, f64, f64, f64)>> = jobs
        .par_iter()
        .map(|job| {
            let mut out = Vec::with_capacity(n_drugs);
            let mut a = Vec::with_capacity(job.mutated.len());
            let mut b = Vec::with_capacity(job.wildtype.len());
            for d in 0..n_drugs {
                let row = values.row(d);
                a.clear();
                b.clear();
                a.extend(job.mutated.iter().map(|&s| row[s]));
                b.extend(job.wildtype.iter().map(|&s| row[s]));
                let t = welch_t_test(&a, &b)?;
                let delta =
                    a.iter().sum::<f64>() / a.len() as f64 - b.iter().sum::<f64>() / b.len() as f64;
                out.push((d, delta, t.t, t.p));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let n_tests: usize = tested.iter().map(Vec::len).sum();
    let genes = mutation.gene_ids();
    let drugs = pred.drug_ids();
    let mut records = Vec::new();
    let mut pairs = Vec::with_capacity(jobs.len());
    for (job, tests) in jobs.iter().zip(tested) {
        for (d, delta, t, p) in tests {
            let p_adj = bonferroni_one(p, n_tests);
            if p_adj < alpha {
                records.push(AssociationRecord {
                    cancer: job.cancer.clone(),
                    gene: genes[job.gene].clone(),
                    drug: drugs[d].clone(),
                    n_mut: job.mutated.len(),
                    n_wt: job.wildtype.len(),
                    delta_ic50: delta,
                    t_stat: t,
                    p_raw: p,
                    p_adj,
                });
            }
        }
        pairs.push(TestedPair {
            cancer: job.cancer.clone(),
            gene: genes[job.gene].clone(),
            n_mut: job.mutated.len(),
            n_samples: job.mutated.len() + job.wildtype.len(),
        });
    }
    records.sort_by(|x, y| (&x.cancer, &x.gene, &x.drug).cmp(&(&y.cancer, &y.gene, &y.drug)));
    pairs.sort_by(|x, y| (&x.cancer, &x.gene).cmp(&(&y.cancer, &y.gene)));
    Ok(ScanResult {
        records,
        n_tests,
        pairs,
        skipped_cancers: Vec::new(),
    })
}

/// Builds the job for gene `g` over `samples`, or `None` if it fails a gate.
fn gate(
    mutation: &MutationMatrix,
    g: usize,
    samples: &[usize],
    cancer: &str,
    min_rate: f64,
    min_mut: usize,
) -> Option<Job> {
    let row = mutation.values().row(g);
    let (mutated, wildtype): (Vec<usize>, Vec<usize>) =
        samples.iter().partition(|&&s| row[s] > 0.5);
    let rate = mutated.len() as f64 / samples.len() as f64;
    let enough = rate > min_rate && mutated.len() >= min_mut.max(2) && wildtype.len() >= 2;
    enough.then(|| Job {
        cancer: cancer.to_string(),
        gene: g,
        mutated,
        wildtype,
    })
}

/// Within each cancer type, tests every gene whose within-cancer rate
/// exceeds `min_rate` with at least `min_mut` mutated samples, against
/// every drug.
pub fn per_cancer_scan(
    pred: &PredictionMatrix,
    mutation: &MutationMatrix,
    meta: &[SampleMetadata],
    thresholds: &ScanThresholds,
) -> Result<ScanResult> {
    check_aligned(pred, mutation)?;
    let labels = cancer_labels(pred, meta)?;
    let mut by_cancer: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in labels.iter().enumerate() {
        by_cancer.entry(c).or_default().push(i);
    }
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for (cancer, samples) in &by_cancer {
        if samples.len() < thresholds.min_mut + 2 {
            log::info!("skipping cancer {cancer}: {} samples", samples.len());
            skipped.push((cancer.to_string(), samples.len()));
            continue;
        }
        for g in 0..mutation.n_genes() {
            jobs.extend(gate(
                mutation,
                g,
                samples,
                cancer,
                thresholds.min_rate,
                thresholds.min_mut,
            ));
        }
    }
    let mut res = run_jobs(pred, mutation, jobs, thresholds.alpha)?;
    res.skipped_cancers = skipped;
    Ok(res)
}

/// Pools all samples; genes are gated on overall mutation rate only.
pub fn pan_cancer_scan(
    pred: &PredictionMatrix,
    mutation: &MutationMatrix,
    thresholds: &ScanThresholds,
) -> Result<ScanResult> {
    check_aligned(pred, mutation)?;
    let samples: Vec<usize> = (0..pred.n_samples()).collect();
    let jobs = (0..mutation.n_genes())
        .filter_map(|g| gate(mutation, g, &samples, PAN_CANCER, thresholds.min_rate, 2))
        .collect();
    run_jobs(pred, mutation, jobs, thresholds.alpha)
}
