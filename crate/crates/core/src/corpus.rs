//! Labeled title corpora: ingestion, rare-label filtering, stratified
//! splitting and label-distribution skewness.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One titled sample.
///
/// `true_label` is fixed when the corpus is loaded; `observed_label` is what
/// trainers see and is the only label noise injection and denoising touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: u64,
    pub title: String,
    pub true_label: usize,
    pub observed_label: usize,
    pub split: Split,
}

impl Item {
    pub fn is_noisy(&self) -> bool {
        self.observed_label != self.true_label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub items: Vec<Item>,
    pub labels: Vec<String>,
    pub source: String,
}

/// Delimited-text input format. Columns are found by header name.
#[derive(Debug, Clone)]
pub struct TextFormat {
    pub delimiter: u8,
    pub title_column: String,
    pub label_column: String,
    /// Optional column holding stable integer ids; row order is used otherwise.
    pub id_column: Option<String>,
}

impl Default for TextFormat {
    fn default() -> Self {
        TextFormat {
            delimiter: b',',
            title_column: "title".into(),
            label_column: "label".into(),
            id_column: Some("id".into()),
        }
    }
}

impl TextFormat {
    pub fn tsv() -> Self {
        TextFormat {
            delimiter: b'\t',
            ..Default::default()
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: &TextFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut c = read_corpus(file, format)?;
    c.source = path.display().to_string();
    Ok(c)
}

/// Parses a corpus from any reader holding delimited text with a header row.
pub fn read_corpus(reader: impl std::io::Read, format: &TextFormat) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::Empty("input".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let title_col = find(&format.title_column).ok_or_else(|| Error::Malformed {
        line: 1,
        message: format!("header has no {:?} column", format.title_column),
    })?;
    let label_col = find(&format.label_column).ok_or_else(|| Error::Malformed {
        line: 1,
        message: format!("header has no {:?} column", format.label_column),
    })?;
    let id_col = format.id_column.as_deref().and_then(find);

    let mut builder = CorpusBuilder::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(row as u64 + 2);
        let field = |col: usize, what: &str| {
            rec.get(col).ok_or_else(|| Error::Malformed {
                line,
                message: format!("missing {what} field"),
            })
        };
        let title = field(title_col, "title")?;
        let label = field(label_col, "label")?.trim();
        if label.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty label".into(),
            });
        }
        let id = match id_col {
            Some(col) => field(col, "id")?
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Malformed {
                    line,
                    message: format!("bad id: {e}"),
                })?,
            None => row as u64,
        };
        builder.push(id, title, label).map_err(|message| Error::Malformed { line, message })?;
    }
    if builder.items.is_empty() {
        return Err(Error::Empty("input".into()));
    }
    Ok(builder.finish(String::new()))
}

/// Accumulates items, assigning label indices in first-seen order.
#[derive(Default)]
pub struct CorpusBuilder {
    items: Vec<Item>,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    ids: HashSet<u64>,
}

impl CorpusBuilder {
    pub fn push(&mut self, id: u64, title: &str, label: &str) -> std::result::Result<(), String> {
        if title.trim().is_empty() {
            return Err("empty title".into());
        }
        if !self.ids.insert(id) {
            return Err(format!("duplicate id {id}"));
        }
        let label = match self.index.get(label) {
            Some(&i) => i,
            None => {
                let i = self.labels.len();
                self.index.insert(label.to_string(), i);
                self.labels.push(label.to_string());
                i
            }
        };
        self.items.push(Item {
            id,
            title: title.to_string(),
            true_label: label,
            observed_label: label,
            split: Split::Train,
        });
        Ok(())
    }

    pub fn finish(self, source: impl Into<String>) -> Corpus {
        Corpus {
            items: self.items,
            labels: self.labels,
            source: source.into(),
        }
    }
}

impl Corpus {
    /// Builds a corpus from `(title, label)` pairs with ids `0..n`.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Corpus> {
        let mut b = CorpusBuilder::default();
        for (i, (title, label)) in pairs.into_iter().enumerate() {
            b.push(i as u64, title, label)
                .map_err(|message| Error::Malformed { line: i as u64 + 1, message })?;
        }
        if b.items.is_empty() {
            return Err(Error::Empty("corpus".into()));
        }
        Ok(b.finish("memory"))
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn split_items(&self, split: Split) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(move |it| it.split == split)
    }

    pub fn train(&self) -> impl Iterator<Item = &Item> {
        self.split_items(Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Item> {
        self.split_items(Split::Test)
    }

    pub fn train_len(&self) -> usize {
        self.train().count()
    }

    /// Observed-label counts per vocabulary label for one split.
    pub fn label_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for it in self.split_items(split) {
            counts[it.observed_label] += 1;
        }
        counts
    }

    /// Fraction of train items whose observed label differs from the truth.
    pub fn train_noise_rate(&self) -> f64 {
        let (n, noisy) = self
            .train()
            .fold((0usize, 0usize), |(n, k), it| (n + 1, k + it.is_noisy() as usize));
        if n == 0 {
            0.0
        } else {
            noisy as f64 / n as f64
        }
    }

    /// Fails if any test item carries a label other than its truth.
    pub fn check_test_clean(&self) -> Result<()> {
        match self.test().find(|it| it.is_noisy()) {
            Some(it) => Err(Error::NotClean { id: it.id }),
            None => Ok(()),
        }
    }

    pub fn index_by_id(&self) -> HashMap<u64, usize> {
        self.items.iter().enumerate().map(|(i, it)| (it.id, i)).collect()
    }
}

/// Keeps only items whose label occurs at least `min_count` times and
/// re-indexes the label vocabulary densely in its original order.
pub fn filter_rare_labels(c: &Corpus, min_count: usize) -> Result<Corpus> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut counts = vec![0usize; c.labels.len()];
    for it in &c.items {
        counts[it.true_label] += 1;
    }
    let mut remap = vec![None; c.labels.len()];
    let mut labels = Vec::new();
    for (old, &n) in counts.iter().enumerate() {
        if n >= min_count {
            remap[old] = Some(labels.len());
            labels.push(c.labels[old].clone());
        }
    }
    if labels.is_empty() {
        return Err(Error::NoLabelMeetsMinCount(min_count));
    }
    let items = c
        .items
        .iter()
        .filter_map(|it| {
            let true_label = remap[it.true_label]?;
            // An observed label pointing at a dropped class falls back to the truth.
            let observed_label = remap[it.observed_label].unwrap_or(true_label);
            Some(Item {
                true_label,
                observed_label,
                ..it.clone()
            })
        })
        .collect();
    Ok(Corpus {
        items,
        labels,
        source: c.source.clone(),
    })
}

/// Tags `max(1, round(count * test_fraction))` items of every label as test,
/// chosen by a seed-keyed hash of the item id.
pub fn stratified_split(c: &Corpus, test_fraction: f64, seed: u64) -> Result<Corpus> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); c.labels.len()];
    for (i, it) in c.items.iter().enumerate() {
        by_label[it.true_label].push(i);
    }
    let mut out = c.clone();
    for it in &mut out.items {
        it.split = Split::Train;
    }
    for (label, members) in by_label.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::TooFewForSplit {
                label: c.labels[label].clone(),
                count: members.len(),
            });
        }
        let n_test = rng::round_half_up(members.len() as f64 * test_fraction).max(1);
        members.sort_by_key(|&i| {
            let id = c.items[i].id;
            (rng::key(&[seed, streams::SPLIT, id]), id)
        });
        for &i in &members[..n_test] {
            let it = &mut out.items[i];
            it.split = Split::Test;
            it.observed_label = it.true_label;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewReport {
    /// KL divergence from the empirical label distribution to uniform, in nats.
    pub kl_divergence: f64,
    pub per_class_counts: Vec<(String, usize)>,
}

impl SkewReport {
    pub fn kl_bits(&self) -> f64 {
        self.kl_divergence / std::f64::consts::LN_2
    }
}

pub fn kl_skewness(c: &Corpus, split: Split) -> Result<SkewReport> {
    let counts = c.label_counts(split);
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty(format!("{split} split")));
    }
    let k = counts.len() as f64;
    let kl = counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let p = n as f64 / total as f64;
            p * (p * k).ln()
        })
        .sum::<f64>()
        .max(0.0);
    // Exactly uniform counts give exactly zero regardless of rounding.
    let kl = if counts.iter().all(|&n| n == counts[0]) { 0.0 } else { kl };
    Ok(SkewReport {
        kl_divergence: kl,
        per_class_counts: c.labels.iter().cloned().zip(counts).collect(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRecord<'a> {
    id: u64,
    title: std::borrow::Cow<'a, str>,
    label: std::borrow::Cow<'a, str>,
    split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotLabels {
    labels: Vec<String>,
    source: String,
}

/// Path of the label-vocabulary sidecar written next to a snapshot.
pub fn labels_sidecar(path: &Path) -> PathBuf {
    path.with_extension("labels.json")
}

/// Writes the corpus as JSON lines of observed labels, plus a sidecar with the
/// label vocabulary so indices survive a round trip.
pub fn write_snapshot(c: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for it in &c.items {
        let rec = SnapshotRecord {
            id: it.id,
            title: it.title.as_str().into(),
            label: c.labels[it.observed_label].as_str().into(),
            split: it.split,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let side = labels_sidecar(path);
    let meta = SnapshotLabels {
        labels: c.labels.clone(),
        source: c.source.clone(),
    };
    std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))
}

/// Reads a snapshot. True labels are unknown on disk, so they are set to the
/// observed labels; see [`crate::noise::FlipManifest::restore_truth`].
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let side = labels_sidecar(path);
    let (mut labels, source) = match std::fs::read(&side) {
        Ok(bytes) => {
            let meta: SnapshotLabels = serde_json::from_slice(&bytes)?;
            (meta.labels, meta.source)
        }
        Err(_) => (Vec::new(), path.display().to_string()),
    };
    let mut index: HashMap<String, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SnapshotRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: n as u64 + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(rec.id) {
            return Err(Error::Malformed {
                line: n as u64 + 1,
                message: format!("duplicate id {}", rec.id),
            });
        }
        let next = labels.len();
        let label = *index.entry(rec.label.to_string()).or_insert(next);
        if label == next {
            labels.push(rec.label.to_string());
        }
        items.push(Item {
            id: rec.id,
            title: rec.title.into_owned(),
            true_label: label,
            observed_label: label,
            split: rec.split,
        });
    }
    if items.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    Ok(Corpus { items, labels, source })
}
