//! Tab-separated readers and writers for every on-disk matrix format.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write followed by a read reproduces values bit-for-bit. Missing
//! response cells are written as `NA`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::matrix::{
    DrugResponseMatrix, ExpressionMatrix, GeneMatrix, LabeledMatrix, MutationMatrix,
    PredictionMatrix, SampleMetadata,
};
use crate::error::{Error, Result};

pub const GENE_CORNER: &str = "gene_id";
pub const DRUG_CORNER: &str = "drug_id";
pub const MISSING: &str = "NA";

/// Variant classes counted as nonsynonymous.
pub const NONSYNONYMOUS_CLASSES: [&str; 4] = [
    "Missense_Mutation",
    "Nonsense_Mutation",
    "Frame_Shift_Ins",
    "Frame_Shift_Del",
];

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses a matrix file whose header starts with `corner`. `cell` turns
/// each body cell into a value or an error message.
fn read_matrix<F>(path: &Path, corner: &str, mut cell: F) -> Result<LabeledMatrix>
where
    F: FnMut(&str) -> std::result::Result<f64, String>,
{
    let p = path.display().to_string();
    let text = read_to_string(path)?;
    let mut it = lines(&text);
    let (_, header) = it
        .next()
        .ok_or_else(|| Error::Data(format!("{p}: empty file")))?;
    let mut head = header.split('\t');
    if head.next() != Some(corner) {
        return Err(Error::MissingColumn {
            path: p,
            column: corner.to_string(),
        });
    }
    let col_ids: Vec<String> = head.map(str::to_string).collect();
    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    for (line_no, line) in it {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let mut n = 0;
        for (j, f) in fields.enumerate() {
            let v = cell(f).map_err(|msg| Error::Parse {
                path: p.clone(),
                row: line_no,
                col: j + 2,
                msg,
            })?;
            data.push(v);
            n += 1;
        }
        if n != col_ids.len() {
            return Err(Error::Parse {
                path: p,
                row: line_no,
                col: n + 1,
                msg: format!("expected {} values, found {n}", col_ids.len()),
            });
        }
        row_ids.push(id);
    }
    let values = Array2::from_shape_vec((row_ids.len(), col_ids.len()), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    LabeledMatrix::new(row_ids, col_ids, values)
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn format_value(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str(MISSING);
    } else {
        write!(out, "{v}").expect("write to String");
    }
}

/// Serializes a labeled matrix with `corner` as the first header cell.
pub fn format_matrix(m: &LabeledMatrix, corner: &str) -> String {
    let mut out = String::with_capacity(16 * (m.n_rows() + 1) * (m.n_cols() + 1));
    out.push_str(corner);
    for c in m.col_ids() {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (i, id) in m.row_ids().iter().enumerate() {
        out.push_str(id);
        for v in m.row(i) {
            out.push('\t');
            format_value(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(m: &LabeledMatrix, corner: &str, path: &Path) -> Result<()> {
    write_string(path, &format_matrix(m, corner))
}

/// Loads genes × samples expression. Raw TPM is transformed to log₂(TPM+1)
/// unless `already_log` is set.
pub fn load_expression_tsv(path: &Path, already_log: bool) -> Result<ExpressionMatrix> {
    let m = read_matrix(path, GENE_CORNER, |s| {
        let v = parse_number(s)?;
        if v < 0.0 {
            return Err(format!("negative value {v}"));
        }
        Ok(if already_log { v } else { (v + 1.0).log2() })
    })?;
    ExpressionMatrix::new(m)
}

pub fn write_expression_tsv(m: &ExpressionMatrix, path: &Path) -> Result<()> {
    write_matrix(m.labeled(), GENE_CORNER, path)
}

/// Binary genes × samples matrix, the preprocessed on-disk mutation form.
pub fn load_mutation_tsv(path: &Path) -> Result<MutationMatrix> {
    let m = read_matrix(path, GENE_CORNER, |s| match s.trim() {
        "0" => Ok(0.0),
        "1" => Ok(1.0),
        other => Err(format!("'{other}' is not 0 or 1")),
    })?;
    MutationMatrix::new(m)
}

pub fn write_mutation_tsv(m: &MutationMatrix, path: &Path) -> Result<()> {
    write_matrix(m.labeled(), GENE_CORNER, path)
}

/// Tally of MAF records that did not contribute to the matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MafSummary {
    pub records: usize,
    pub nonsynonymous: usize,
    pub unknown_sample: usize,
}

/// Builds a binary mutation matrix from a MAF-lite file.
///
/// Gene rows cover every gene named by a record of a known sample, in
/// lexicographic order; columns follow `sample_universe`.
pub fn load_mutation_maf(
    path: &Path,
    sample_universe: &[String],
) -> Result<(MutationMatrix, MafSummary)> {
    let p = path.display().to_string();
    let text = read_to_string(path)?;
    let mut it = lines(&text).filter(|(_, l)| !l.starts_with('#'));
    let (_, header) = it
        .next()
        .ok_or_else(|| Error::Data(format!("{p}: empty file")))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::MissingColumn {
                path: p.clone(),
                column: name.to_string(),
            })
    };
    let gene_col = find("Hugo_Symbol")?;
    let class_col = find("Variant_Classification")?;
    let sample_col = find("Tumor_Sample_Barcode")?;
    let needed = gene_col.max(class_col).max(sample_col);

    let sample_index: HashMap<&str, usize> = sample_universe
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if sample_index.len() != sample_universe.len() {
        return Err(Error::Data(format!(
            "{p}: sample universe has duplicate ids"
        )));
    }
    let mut summary = MafSummary::default();
    let mut genes = BTreeSet::new();
    let mut hits: HashSet<(String, usize)> = HashSet::new();
    for (line_no, line) in it {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() <= needed {
            return Err(Error::Parse {
                path: p.clone(),
                row: line_no,
                col: fields.len() + 1,
                msg: "record has too few columns".into(),
            });
        }
        summary.records += 1;
        let Some(&s) = sample_index.get(fields[sample_col]) else {
            summary.unknown_sample += 1;
            continue;
        };
        let gene = fields[gene_col].to_string();
        if NONSYNONYMOUS_CLASSES.contains(&fields[class_col]) {
            summary.nonsynonymous += 1;
            hits.insert((gene.clone(), s));
        }
        genes.insert(gene);
    }
    if summary.unknown_sample > 0 {
        log::warn!(
            "{p}: skipped {} records whose sample is not in the cohort",
            summary.unknown_sample
        );
    }
    let genes: Vec<String> = genes.into_iter().collect();
    let gene_index: HashMap<&str, usize> = genes
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut values = Array2::zeros((genes.len(), sample_universe.len()));
    for (g, s) in &hits {
        values[[gene_index[g.as_str()], *s]] = 1.0;
    }
    let m = LabeledMatrix::new(genes, sample_universe.to_vec(), values)?;
    Ok((MutationMatrix::new(m)?, summary))
}

/// One MAF-lite row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MafRecord {
    pub gene: String,
    pub classification: String,
    pub sample: String,
}

pub fn write_maf_lite(records: &[MafRecord], path: &Path) -> Result<()> {
    let mut out = String::from("Hugo_Symbol\tVariant_Classification\tTumor_Sample_Barcode\n");
    for r in records {
        writeln!(out, "{}\t{}\t{}", r.gene, r.classification, r.sample).expect("write to String");
    }
    write_string(path, &out)
}

/// Loads drugs × samples IC₅₀. Raw μM values are log₁₀-transformed unless
/// `already_log` is set; `NA` marks a missing cell.
pub fn load_drug_response(path: &Path, already_log: bool) -> Result<DrugResponseMatrix> {
    let m = read_matrix(path, DRUG_CORNER, |s| {
        if s.trim() == MISSING {
            return Ok(f64::NAN);
        }
        let v = parse_number(s)?;
        if already_log {
            Ok(v)
        } else if v <= 0.0 {
            Err(format!("raw IC50 {v} must be positive"))
        } else {
            Ok(v.log10())
        }
    })?;
    DrugResponseMatrix::from_values(m)
}

pub fn write_drug_response(r: &DrugResponseMatrix, path: &Path) -> Result<()> {
    write_matrix(r.labeled(), DRUG_CORNER, path)
}

/// Writes the imputed-cell mask of `r` as a 0/1 drugs × samples table.
pub fn write_imputed_mask(r: &DrugResponseMatrix, path: &Path) -> Result<()> {
    let mask = LabeledMatrix::new(
        r.drug_ids().to_vec(),
        r.sample_ids().to_vec(),
        r.imputed_mask().mapv(|b| if b { 1.0 } else { 0.0 }),
    )?;
    write_matrix(&mask, DRUG_CORNER, path)
}

/// Loads a complete log₁₀ response together with the mask written by
/// [`write_imputed_mask`].
pub fn load_imputed_response(values: &Path, mask: &Path) -> Result<DrugResponseMatrix> {
    let r = load_drug_response(values, true)?;
    let p = mask.display().to_string();
    let m = read_matrix(mask, DRUG_CORNER, |s| match s.trim() {
        "0" => Ok(0.0),
        "1" => Ok(1.0),
        other => Err(format!("mask value '{other}' is not 0 or 1")),
    })?;
    if m.row_ids() != r.drug_ids() || m.col_ids() != r.sample_ids() {
        return Err(Error::Data(format!(
            "{p}: mask labels differ from the response"
        )));
    }
    r.with_imputed_mask(m.values().mapv(|v| v == 1.0))
}

pub fn load_predictions(path: &Path) -> Result<PredictionMatrix> {
    PredictionMatrix::new(read_matrix(path, DRUG_CORNER, parse_number)?)
}

pub fn write_predictions(p: &PredictionMatrix, path: &Path) -> Result<()> {
    write_matrix(p.labeled(), DRUG_CORNER, path)
}

pub fn load_metadata(path: &Path) -> Result<Vec<SampleMetadata>> {
    let p = path.display().to_string();
    let text = read_to_string(path)?;
    let mut it = lines(&text);
    let (_, header) = it
        .next()
        .ok_or_else(|| Error::Data(format!("{p}: empty file")))?;
    let cols: Vec<&str> = header.split('\t').collect();
    for (i, name) in ["sample_id", "cancer_type"].iter().enumerate() {
        if cols.get(i) != Some(name) {
            return Err(Error::MissingColumn {
                path: p,
                column: name.to_string(),
            });
        }
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in it {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                path: p,
                row: line_no,
                col: fields.len(),
                msg: format!("expected {} fields", cols.len()),
            });
        }
        if fields[1].is_empty() {
            return Err(Error::Parse {
                path: p,
                row: line_no,
                col: 2,
                msg: "empty cancer type".into(),
            });
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(Error::DuplicateId {
                kind: "sample",
                id: fields[0].to_string(),
            });
        }
        let extra_labels: BTreeMap<String, String> = cols[2..]
            .iter()
            .zip(&fields[2..])
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        out.push(SampleMetadata {
            sample_id: fields[0].to_string(),
            cancer_type: fields[1].to_string(),
            extra_labels,
        });
    }
    Ok(out)
}

pub fn write_metadata(meta: &[SampleMetadata], path: &Path) -> Result<()> {
    let labels: BTreeSet<&str> = meta
        .iter()
        .flat_map(|m| m.extra_labels.keys().map(String::as_str))
        .collect();
    let mut out = String::from("sample_id\tcancer_type");
    for l in &labels {
        out.push('\t');
        out.push_str(l);
    }
    out.push('\n');
    for m in meta {
        out.push_str(&m.sample_id);
        out.push('\t');
        out.push_str(&m.cancer_type);
        for l in &labels {
            out.push('\t');
            out.push_str(m.extra_labels.get(*l).map(String::as_str).unwrap_or(""));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn expression_log_transform() {
        let d = tempdir().unwrap();
        let p = write(
            d.path(),
            "e.tsv",
            "gene_id\tS1\tS2\nA\t0\t1\nB\t3\t3\nC\t3\t3\n",
        );
        let m = load_expression_tsv(&p, false).unwrap();
        assert_eq!(m.values()[[0, 0]], 0.0);
        assert_eq!(m.values()[[0, 1]], 1.0);
        // log2(3 + 1) = 2
        assert_eq!(m.values()[[1, 0]], 2.0);
        assert_eq!(m.values()[[2, 1]], 2.0);
    }

    #[test]
    fn expression_all_threes_fixture() {
        let d = tempdir().unwrap();
        let p = write(
            d.path(),
            "e.tsv",
            "gene_id\tS1\tS2\nA\t3\t3\nB\t3\t3\nC\t3\t3\n",
        );
        let m = load_expression_tsv(&p, false).unwrap();
        assert_eq!(m.values().dim(), (3, 2));
        assert!(m.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn expression_errors() {
        let d = tempdir().unwrap();
        let dup = write(d.path(), "dup.tsv", "gene_id\tS1\nA\t1\nA\t2\n");
        assert!(matches!(
            load_expression_tsv(&dup, false),
            Err(Error::DuplicateId { ref id, .. }) if id == "A"
        ));
        let dup_s = write(d.path(), "dups.tsv", "gene_id\tS1\tS1\nA\t1\t2\n");
        assert!(matches!(
            load_expression_tsv(&dup_s, false),
            Err(Error::DuplicateId { .. })
        ));
        let bad = write(d.path(), "bad.tsv", "gene_id\tS1\tS2\nA\t1\tx\n");
        match load_expression_tsv(&bad, false) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        let neg = write(d.path(), "neg.tsv", "gene_id\tS1\nA\t-1\n");
        assert!(matches!(
            load_expression_tsv(&neg, false),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn maf_counts_qualifying_pairs() {
        let d = tempdir().unwrap();
        let p = write(
            d.path(),
            "m.maf",
            "#version 2.4\nHugo_Symbol\tChromosome\tVariant_Classification\tTumor_Sample_Barcode\n\
             TP53\t17\tMissense_Mutation\tS1\n\
             TP53\t17\tMissense_Mutation\tS1\n\
             KRAS\t12\tNonsense_Mutation\tS2\n\
             EGFR\t7\tSilent\tS1\n\
             PTEN\t10\tFrame_Shift_Del\tS3\n\
             PTEN\t10\tFrame_Shift_Del\tS9\n",
        );
        let (m, summary) = load_mutation_maf(&p, &ids(&["S1", "S2", "S3", "S4"])).unwrap();
        assert_eq!(m.values().sum(), 3.0);
        assert_eq!(m.gene_ids(), &ids(&["EGFR", "KRAS", "PTEN", "TP53"])[..]);
        assert_eq!(m.values()[[3, 0]], 1.0);
        assert_eq!(m.values().column(3).sum(), 0.0);
        assert_eq!(summary.unknown_sample, 1);
    }

    #[test]
    fn maf_silent_only_is_all_zero() {
        let d = tempdir().unwrap();
        let p = write(
            d.path(),
            "m.maf",
            "Hugo_Symbol\tVariant_Classification\tTumor_Sample_Barcode\nTP53\tSilent\tS1\n",
        );
        let (m, _) = load_mutation_maf(&p, &ids(&["S1"])).unwrap();
        assert_eq!(m.values().sum(), 0.0);
    }

    #[test]
    fn maf_missing_column_is_named() {
        let d = tempdir().unwrap();
        let p = write(
            d.path(),
            "m.maf",
            "Hugo_Symbol\tTumor_Sample_Barcode\nTP53\tS1\n",
        );
        match load_mutation_maf(&p, &ids(&["S1"])) {
            Err(Error::MissingColumn { column, .. }) => {
                assert_eq!(column, "Variant_Classification")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn drug_response_parsing() {
        let d = tempdir().unwrap();
        let p = write(d.path(), "r.tsv", "drug_id\tS1\tS2\tS3\nD1\t1\t100\tNA\n");
        let r = load_drug_response(&p, false).unwrap();
        assert_eq!(r.values()[[0, 0]], 0.0);
        assert_eq!(r.values()[[0, 1]], 2.0);
        assert!(r.values()[[0, 2]].is_nan());
        assert!(!r.observed_mask()[[0, 2]]);

        let bad = write(d.path(), "bad.tsv", "drug_id\tS1\nD1\t0\n");
        match load_drug_response(&bad, false) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        // Log-scale input may be negative.
        let logp = write(d.path(), "log.tsv", "drug_id\tS1\nD1\t-1.5\n");
        assert_eq!(
            load_drug_response(&logp, true).unwrap().values()[[0, 0]],
            -1.5
        );
    }

    #[test]
    fn imputed_mask_round_trip() {
        let dir = tempdir().unwrap();
        let p = write(
            dir.path(),
            "r.tsv",
            "drug_id\tS1\tS2\tS3\nD1\t1\tNA\t3\nD2\t2\t2\t4\nD3\t0.5\t1.5\tNA\n",
        );
        let r = load_drug_response(&p, true).unwrap();
        let filled = crate::data::impute_column_mean(&r).unwrap();
        write_drug_response(&filled, &dir.path().join("v.tsv")).unwrap();
        write_imputed_mask(&filled, &dir.path().join("m.tsv")).unwrap();
        let back =
            load_imputed_response(&dir.path().join("v.tsv"), &dir.path().join("m.tsv")).unwrap();
        assert_eq!(back.values(), filled.values());
        assert_eq!(back.imputed_mask(), filled.imputed_mask());
        assert_eq!(back.imputed_mask().iter().filter(|b| **b).count(), 2);
    }

    #[test]
    fn metadata_round_trip() {
        let d = tempdir().unwrap();
        let p = write(
            d.path(),
            "meta.tsv",
            "sample_id\tcancer_type\ter_status\nS1\tBRCA\tpositive\nS2\tLUAD\t\n",
        );
        let meta = load_metadata(&p).unwrap();
        assert_eq!(meta[0].extra_labels["er_status"], "positive");
        let out = d.path().join("out.tsv");
        write_metadata(&meta, &out).unwrap();
        assert_eq!(load_metadata(&out).unwrap(), meta);
    }
}
