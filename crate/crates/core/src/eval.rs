//! Macro-F1 scoring, average performance improvement, and result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::SoftmaxClassifier;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// How classes absent from gold and never predicted enter the macro mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroSupport {
    /// They count as F1 = 0.
    #[default]
    Include,
    /// They are left out of the mean.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub macro_f1: f64,
    /// Indexed by label.
    pub per_class_f1: Vec<f64>,
    /// Gold count per label.
    pub support: Vec<usize>,
    /// Number of predictions per label.
    pub predicted: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

impl EvalReport {
    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = Some(fingerprint.into());
        self
    }
}

pub fn macro_f1(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<EvalReport> {
    macro_f1_with(predictions, gold, num_classes, ZeroSupport::Include)
}

pub fn macro_f1_with(
    predictions: &[usize],
    gold: &[usize],
    num_classes: usize,
    policy: ZeroSupport,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch { left: predictions.len(), right: gold.len() });
    }
    if gold.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be positive".into()));
    }
    if let Some(&bad) = predictions.iter().chain(gold).find(|&&k| k >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {num_classes} classes")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        support[g] += 1;
        predicted[p] += 1;
        if p == g {
            tp[g] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..num_classes)
        .map(|k| {
            // 2PR/(P+R) simplifies to 2TP/(support + predicted).
            let denom = support[k] + predicted[k];
            if denom == 0 || tp[k] == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .collect();
    let included: Vec<usize> = (0..num_classes)
        .filter(|&k| policy == ZeroSupport::Include || support[k] + predicted[k] > 0)
        .collect();
    let macro_f1 = included.iter().map(|&k| per_class_f1[k]).sum::<f64>() / included.len() as f64;
    Ok(EvalReport { macro_f1, per_class_f1, support, predicted, fingerprint: None })
}

/// Scores `m` on the test split against the true labels.
pub fn evaluate(m: &SoftmaxClassifier, c: &Corpus) -> Result<EvalReport> {
    if m.num_classes() != c.num_classes() {
        return Err(Error::LabelSpaceMismatch { expected: c.num_classes(), found: m.num_classes() });
    }
    let (pred, gold): (Vec<usize>, Vec<usize>) = c.test().map(|it| (m.predict(&it.title).top1, it.true_label)).unzip();
    macro_f1(&pred, &gold, c.num_classes())
}

/// Mean relative improvement of `method` over `base`, in percent.
pub fn recompute_api(base: &[f64], method: &[f64]) -> Result<f64> {
    if base.len() != method.len() {
        return Err(Error::DimensionMismatch { left: base.len(), right: method.len() });
    }
    if base.is_empty() {
        return Err(Error::Empty("score list".into()));
    }
    if let Some(b) = base.iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::InvalidArgument(format!("base score must be positive, got {b}")));
    }
    let total: f64 = base.iter().zip(method).map(|(b, m)| 100.0 * (m - b) / b).sum();
    Ok(total / base.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSummary {
    /// `(dataset, base, method)` for every dataset with both scores.
    pub pairs: Vec<(String, f64, f64)>,
    pub api: f64,
}

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub rate: f64,
    pub trainer: String,
    pub macro_f1: f64,
    pub seed: u64,
}

pub fn write_report_csv(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["dataset", "method", "rate", "trainer", "macro_f1", "seed"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Column order of result tables; trainers outside this list follow in
/// lexicographic order.
pub const COLUMNS: [(&str, &str); 5] = [
    ("base", "Base"),
    ("den", "DeN"),
    ("seal", "SEAL"),
    ("plc", "PLC"),
    ("coteaching_plus", "CTp"),
];

const MISSING: &str = "-";

/// One `(noise method, rate)` block: a row per dataset plus API per column.
#[derive(Debug, Clone, PartialEq)]
pub struct TableBlock {
    pub method: String,
    pub rate: f64,
    pub datasets: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<Option<f64>>>,
    /// API of each column against Base; `None` for Base itself and for
    /// columns without any dataset pairing.
    pub api: Vec<Option<ApiSummary>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// Trainer keys, in column order.
    pub trainers: Vec<String>,
    pub blocks: Vec<TableBlock>,
}

fn column_title(trainer: &str) -> String {
    COLUMNS
        .iter()
        .find(|(k, _)| *k == trainer)
        .map_or_else(|| trainer.to_string(), |(_, t)| t.to_string())
}

pub fn build_result_table(runs: &[RunRecord]) -> Result<ResultTable> {
    let mut seen = BTreeSet::new();
    for r in runs {
        if !seen.insert((r.dataset.as_str(), r.method.as_str(), r.rate.to_bits(), r.trainer.as_str())) {
            return Err(Error::DuplicateKey(format!(
                "{}/{}/{}/{}",
                r.dataset, r.method, r.rate, r.trainer
            )));
        }
    }

    let present: BTreeSet<&str> = runs.iter().map(|r| r.trainer.as_str()).collect();
    let mut trainers: Vec<String> = COLUMNS
        .iter()
        .filter(|(k, _)| present.contains(k))
        .map(|(k, _)| k.to_string())
        .collect();
    trainers.extend(
        present
            .iter()
            .filter(|t| !COLUMNS.iter().any(|(k, _)| k == *t))
            .map(|t| t.to_string()),
    );

    // Blocks in first-appearance order; datasets likewise within a block.
    let mut block_order: Vec<(String, u64)> = Vec::new();
    let mut grouped: BTreeMap<(String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        let key = (r.method.clone(), r.rate.to_bits());
        if !grouped.contains_key(&key) {
            block_order.push(key.clone());
        }
        grouped.entry(key).or_default().push(r);
    }

    let blocks = block_order
        .into_iter()
        .map(|key| {
            let rows = &grouped[&key];
            let mut datasets: Vec<String> = Vec::new();
            for r in rows {
                if !datasets.contains(&r.dataset) {
                    datasets.push(r.dataset.clone());
                }
            }
            let cells: Vec<Vec<Option<f64>>> = datasets
                .iter()
                .map(|d| {
                    trainers
                        .iter()
                        .map(|t| rows.iter().find(|r| &r.dataset == d && &r.trainer == t).map(|r| r.macro_f1))
                        .collect()
                })
                .collect();
            let base_col = trainers.iter().position(|t| t == "base");
            let api = (0..trainers.len())
                .map(|j| {
                    let b = base_col.filter(|&b| b != j)?;
                    let pairs: Vec<(String, f64, f64)> = datasets
                        .iter()
                        .zip(&cells)
                        .filter_map(|(d, row)| Some((d.clone(), row[b]?, row[j]?)))
                        .collect();
                    if pairs.is_empty() {
                        return None;
                    }
                    let base: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                    let method: Vec<f64> = pairs.iter().map(|p| p.2).collect();
                    let api = recompute_api(&base, &method).ok()?;
                    Some(ApiSummary { pairs, api })
                })
                .collect();
            TableBlock { method: key.0, rate: f64::from_bits(key.1), datasets, cells, api }
        })
        .collect();
    Ok(ResultTable { trainers, blocks })
}

impl ResultTable {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["method".to_string(), "rate".into(), "dataset".into()];
        h.extend(self.trainers.iter().map(|t| column_title(t)));
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for (d, row) in b.datasets.iter().zip(&b.cells) {
                let mut r = vec![b.method.clone(), b.rate.to_string(), d.clone()];
                r.extend(row.iter().map(|c| c.map_or_else(|| MISSING.to_string(), |v| format!("{v:.4}"))));
                out.push(r);
            }
            let mut r = vec![b.method.clone(), b.rate.to_string(), "API".to_string()];
            r.extend(b.api.iter().map(|a| a.as_ref().map_or_else(|| MISSING.to_string(), |a| format!("{:.1}%", a.api))));
            out.push(r);
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in self.rows() {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let header = self.header();
        let rows = self.rows();
        let width = |j: usize| {
            std::iter::once(&header[j])
                .chain(rows.iter().map(|r| &r[j]))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        };
        let widths: Vec<usize> = (0..header.len()).map(width).collect();
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&header);
        for r in &rows {
            line(r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = macro_f1(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn hand_computed_two_class() {
        let r = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert!((r.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class_f1[1] - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - 0.733_333_333_333_333_3).abs() < 1e-12);
        let r = macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_support_policy() {
        let inc = macro_f1_with(&[0, 1], &[0, 1], 3, ZeroSupport::Include).unwrap();
        let exc = macro_f1_with(&[0, 1], &[0, 1], 3, ZeroSupport::Exclude).unwrap();
        assert!((inc.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(exc.macro_f1, 1.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(macro_f1(&[0], &[0, 1], 2).is_err());
        assert!(macro_f1(&[], &[], 2).is_err());
        assert!(macro_f1(&[3], &[0], 2).is_err());
    }

    #[test]
    fn api_identity_and_errors() {
        assert_eq!(recompute_api(&[0.5, 0.7], &[0.5, 0.7]).unwrap(), 0.0);
        assert!(recompute_api(&[0.0], &[0.1]).is_err());
        assert!(recompute_api(&[0.5], &[0.1, 0.2]).is_err());
        let v = recompute_api(&[0.5, 0.8], &[0.6, 0.8]).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
    }

    fn rec(dataset: &str, trainer: &str, f1: f64) -> RunRecord {
        RunRecord {
            dataset: dataset.into(),
            method: "last_epoch".into(),
            rate: 0.4,
            trainer: trainer.into(),
            macro_f1: f1,
            seed: 1,
        }
    }

    #[test]
    fn single_run_table() {
        let t = build_result_table(&[rec("d", "base", 0.5)]).unwrap();
        assert_eq!(t.trainers, vec!["base"]);
        assert_eq!(t.blocks.len(), 1);
        assert_eq!(t.blocks[0].cells, vec![vec![Some(0.5)]]);
        assert_eq!(t.blocks[0].api, vec![None]);
    }

    #[test]
    fn grid_with_missing_cell() {
        let mut runs = Vec::new();
        for (i, d) in ["a", "b", "c"].iter().enumerate() {
            let base = 0.5 + 0.1 * i as f64;
            runs.push(rec(d, "base", base));
            runs.push(rec(d, "seal", base + 0.05));
            if *d != "b" {
                runs.push(rec(d, "coteaching_plus", base * 1.1));
            }
        }
        let t = build_result_table(&runs).unwrap();
        assert_eq!(t.trainers, vec!["base", "seal", "coteaching_plus"]);
        let b = &t.blocks[0];
        assert_eq!(b.cells[1][2], None);
        let ctp = b.api[2].as_ref().unwrap();
        assert_eq!(ctp.pairs.len(), 2);
        assert!((ctp.api - 10.0).abs() < 1e-9);
        let seal = b.api[1].as_ref().unwrap();
        let expected = recompute_api(&[0.5, 0.6, 0.7], &[0.55, 0.65, 0.75]).unwrap();
        assert!((seal.api - expected).abs() < 1e-12);
        let text = t.to_text();
        assert!(text.contains(MISSING));
        assert!(text.lines().next().unwrap().contains("CTp"));
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 + 1);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let runs = [rec("a", "base", 0.5), rec("a", "base", 0.6)];
        assert!(matches!(build_result_table(&runs), Err(Error::DuplicateKey(_))));
    }

    #[test]
    fn report_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.csv");
        let runs = vec![rec("a", "base", 0.123_456_789), rec("a", "plc", 0.5)];
        write_report_csv(&p, &runs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("dataset,method,rate,trainer,macro_f1,seed\n"));
        assert_eq!(read_report_csv(&p).unwrap(), runs);
    }
}
