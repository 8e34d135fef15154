//! Instance-dependent label noise.
//!
//! Four simulators corrupt the observed labels of train-split items, each
//! exactly once and never onto the item's true label:
//!
//! * [`last_epoch_idn`] flips items probabilistically in proportion to how
//!   ambiguous a clean model finds them, with a scalar noise factor probed by
//!   bisection to hit the requested rate.
//! * [`multi_epoch_idn`] and [`multi_model_idn`] average a sequence of
//!   networks, score each item by its most likely wrong label, and flip the
//!   top `round(r * N)`.
//! * [`similarity_idn`] draws a wrong label in proportion to the item's
//!   maximal title similarity to each other class and flips the items whose
//!   drawn label they most resemble.
//!
//! Per-item randomness is keyed on `(seed, id)`; ties in every sort go to the
//! lower item id.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, Prediction, SoftmaxClassifier, TrainConfig};
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::features::{Cosine, EmbeddingTable, TfIdfModel};
use crate::rng::{self, round_half_up, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMethod {
    LastEpoch,
    MultiEpoch,
    MultiModel,
    Similarity,
}

impl NoiseMethod {
    pub const ALL: [NoiseMethod; 4] = [
        NoiseMethod::LastEpoch,
        NoiseMethod::MultiEpoch,
        NoiseMethod::MultiModel,
        NoiseMethod::Similarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMethod::LastEpoch => "last_epoch",
            NoiseMethod::MultiEpoch => "multi_epoch",
            NoiseMethod::MultiModel => "multi_model",
            NoiseMethod::Similarity => "similarity",
        }
    }
}

impl std::fmt::Display for NoiseMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NoiseMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown noise method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Allowed deviation of the achieved rate for last-epoch noise.
    pub rate_tolerance: f64,
    /// Bisection iterations for the last-epoch noise factor.
    pub max_iterations: usize,
    /// Networks trained by multi-model noise.
    pub model_count: usize,
    /// Above this many train items, similarity noise compares against a
    /// per-class subsample instead of every item.
    pub exact_limit: usize,
    /// Subsample size per class when `exact_limit` is exceeded.
    pub similarity_cap: usize,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            rate_tolerance: 0.005,
            max_iterations: 50,
            model_count: 5,
            exact_limit: 50_000,
            similarity_cap: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub method: NoiseMethod,
    pub rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub params: NoiseParams,
}

impl NoiseSpec {
    pub fn new(method: NoiseMethod, rate: f64, seed: u64) -> Self {
        NoiseSpec { method, rate, seed, params: NoiseParams::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidArgument(format!("noise rate must be in [0, 1), got {}", self.rate)));
        }
        Ok(())
    }
}

/// One corrupted item.
#[derive(Debug, Clone, PartialEq)]
pub struct Flip {
    pub id: u64,
    pub old: usize,
    pub new: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct NoiseResult {
    pub corpus: Corpus,
    /// In commit order (highest score first for sort-and-flip methods).
    pub flips: Vec<Flip>,
    pub achieved_rate: f64,
    pub method: NoiseMethod,
    pub seed: u64,
    /// The bisected noise factor, for last-epoch noise.
    pub noise_factor: Option<f64>,
}

impl NoiseResult {
    pub fn manifest(&self) -> FlipManifest {
        FlipManifest {
            entries: self
                .flips
                .iter()
                .map(|f| ManifestEntry {
                    id: f.id,
                    true_label: self.corpus.labels[f.old].clone(),
                    noisy: self.corpus.labels[f.new].clone(),
                    score: f.score,
                    method: self.method,
                    seed: self.seed,
                })
                .collect(),
        }
    }
}

/// Train-split positions; fails unless every train item is still clean.
fn clean_train_positions(c: &Corpus) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, it) in c.items.iter().enumerate() {
        if it.split == Split::Train {
            if it.is_noisy() {
                return Err(Error::NotClean { id: it.id });
            }
            out.push(i);
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("train split".into()));
    }
    Ok(out)
}

/// Applies flips (given as item positions) and assembles the result.
fn commit(
    c: &Corpus,
    chosen: Vec<(usize, usize, f64)>,
    train_len: usize,
    method: NoiseMethod,
    seed: u64,
    noise_factor: Option<f64>,
) -> NoiseResult {
    let mut corpus = c.clone();
    let mut flips = Vec::with_capacity(chosen.len());
    for (pos, new, score) in chosen {
        let it = &mut corpus.items[pos];
        debug_assert_ne!(new, it.true_label);
        flips.push(Flip { id: it.id, old: it.observed_label, new, score });
        it.observed_label = new;
    }
    let achieved_rate = flips.len() as f64 / train_len as f64;
    NoiseResult { corpus, flips, achieved_rate, method, seed, noise_factor }
}

/// Ambiguity `1 - (p1 - p2)` of a prediction.
pub fn ambiguity(p: &Prediction) -> f64 {
    1.0 - (p.probs[p.top1] - p.probs[p.top2])
}

/// Flips toward the clean model's second choice (or its first, when the model
/// already misclassifies the item) with probability `min(1, f * ambiguity)`.
pub fn last_epoch_idn(c: &Corpus, m: &SoftmaxClassifier, spec: &NoiseSpec) -> Result<NoiseResult> {
    spec.validate()?;
    let train = clean_train_positions(c)?;
    let n = train.len();
    let spec_x = m.feature_spec();

    struct Candidate {
        pos: usize,
        target: usize,
        ambiguity: f64,
        u: f64,
    }
    let candidates: Vec<Candidate> = train
        .iter()
        .map(|&pos| {
            let it = &c.items[pos];
            let p = m.predict_features(&spec_x.featurize(&it.title));
            let target = if p.top1 == it.true_label { p.top2 } else { p.top1 };
            Candidate {
                pos,
                target,
                ambiguity: ambiguity(&p),
                u: rng::unit(rng::key(&[spec.seed, streams::LAST_EPOCH, it.id])),
            }
        })
        .collect();

    let flips_at = |f: f64| candidates.iter().filter(|c| c.u < (f * c.ambiguity).min(1.0)).count();

    let tol = spec.params.rate_tolerance;
    let lo_count = ((spec.rate - tol) * n as f64).ceil().max(0.0) as usize;
    let hi_count = ((spec.rate + tol) * n as f64).floor() as usize;
    let attainable = candidates.iter().filter(|c| c.ambiguity > 0.0).count();
    let unattainable = || Error::UnattainableRate {
        target: spec.rate,
        min: 0.0,
        max: attainable as f64 / n as f64,
    };
    if lo_count > hi_count || lo_count > attainable {
        return Err(unattainable());
    }

    let mut factor = 0.0;
    if lo_count > 0 {
        let mut hi = 1.0;
        while flips_at(hi) < lo_count {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(unattainable());
            }
        }
        let mut lo = 0.0;
        let mut found = None;
        for _ in 0..spec.params.max_iterations {
            let mid = 0.5 * (lo + hi);
            let k = flips_at(mid);
            if k < lo_count {
                lo = mid;
            } else if k > hi_count {
                hi = mid;
            } else {
                found = Some(mid);
                break;
            }
        }
        if found.is_none() && (lo_count..=hi_count).contains(&flips_at(hi)) {
            found = Some(hi);
        }
        factor = found.ok_or_else(unattainable)?;
    }

    let chosen = candidates
        .iter()
        .filter(|c| c.u < (factor * c.ambiguity).min(1.0))
        .map(|c| (c.pos, c.target, c.ambiguity))
        .collect();
    Ok(commit(c, chosen, n, NoiseMethod::LastEpoch, spec.seed, Some(factor)))
}

/// Most probable label other than `truth`, and its probability.
pub fn best_wrong_label(probs: &[f64], truth: usize) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for (k, &p) in probs.iter().enumerate() {
        if k != truth && best.map_or(true, |(_, b)| p > b) {
            best = Some((k, p));
        }
    }
    best.expect("at least two classes")
}

/// Sorts `(position, label, score)` by descending score then ascending id
/// and keeps the first `count`.
fn top_scored(c: &Corpus, mut scored: Vec<(usize, usize, f64)>, count: usize) -> Vec<(usize, usize, f64)> {
    scored.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(c.items[a.0].id.cmp(&c.items[b.0].id))
    });
    scored.truncate(count);
    scored
}

/// Scores each item by the averaged probability of its most likely wrong
/// label over `models` and flips the top `round(r * N)`.
pub fn multi_epoch_idn(c: &Corpus, models: &[SoftmaxClassifier], spec: &NoiseSpec) -> Result<NoiseResult> {
    spec.validate()?;
    if c.num_classes() < 2 {
        return Err(Error::InvalidArgument("noise needs at least 2 labels".into()));
    }
    let train = clean_train_positions(c)?;
    let first = models.first().ok_or_else(|| Error::InvalidArgument("empty model sequence".into()))?;
    if first.num_classes() != c.num_classes() {
        return Err(Error::LabelSpaceMismatch { expected: c.num_classes(), found: first.num_classes() });
    }
    let spec_x = first.feature_spec().clone();
    let mut scored = Vec::with_capacity(train.len());
    for &pos in &train {
        let it = &c.items[pos];
        let x = spec_x.featurize(&it.title);
        let avg = classifier::average_predictions_features(models, &x, |m| {
            (m.feature_spec() != &spec_x).then(|| m.feature_spec().featurize(&it.title))
        })?;
        let (label, score) = best_wrong_label(&avg.probs, it.true_label);
        scored.push((pos, label, score));
    }
    let count = round_half_up(spec.rate * train.len() as f64);
    let chosen = top_scored(c, scored, count);
    Ok(commit(c, chosen, train.len(), NoiseMethod::MultiEpoch, spec.seed, None))
}

/// Trains `model_count` networks with seeds `seed + 1 ..= seed + count` and
/// applies multi-epoch scoring over their final-epoch models.
pub fn multi_model_idn(c: &Corpus, cfg: &TrainConfig, spec: &NoiseSpec) -> Result<NoiseResult> {
    spec.validate()?;
    clean_train_positions(c)?;
    if spec.params.model_count == 0 {
        return Err(Error::InvalidArgument("model_count must be >= 1".into()));
    }
    let models = (1..=spec.params.model_count as u64)
        .map(|k| classifier::train(c, &cfg.with_seed(spec.seed.wrapping_add(k))).map(|o| o.model))
        .collect::<Result<Vec<_>>>()?;
    let mut r = multi_epoch_idn(c, &models, spec)?;
    r.method = NoiseMethod::MultiModel;
    Ok(r)
}

/// `Maxsim` of one train item against every label (0 for its own label).
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSim {
    pub id: u64,
    pub label: usize,
    pub per_label: Vec<f64>,
}

/// Maximal title similarity from every train item to each other class.
///
/// Compares against all train items up to `params.exact_limit`; beyond that,
/// against a seeded subsample of at most `params.similarity_cap` items per class.
pub fn maxsim_table(
    c: &Corpus,
    tfidf: &TfIdfModel,
    emb: Option<&EmbeddingTable>,
    params: &NoiseParams,
    seed: u64,
) -> Result<Vec<MaxSim>> {
    let train: Vec<usize> = c
        .items
        .iter()
        .enumerate()
        .filter(|(_, it)| it.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if let Some(table) = emb {
        table.check_covers_train(c)?;
    }
    let k = c.num_classes();

    // Comparison pool.
    let pool: Vec<usize> = if train.len() <= params.exact_limit {
        train.clone()
    } else {
        let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); k];
        for &i in &train {
            by_label[c.items[i].true_label].push(i);
        }
        let mut pool = Vec::new();
        for members in &mut by_label {
            members.sort_by_key(|&i| (rng::key(&[seed, streams::SUBSAMPLE, c.items[i].id]), c.items[i].id));
            members.truncate(params.similarity_cap);
            pool.extend_from_slice(members);
        }
        pool.sort_unstable();
        pool
    };

    let vectors: Vec<_> = train.iter().map(|&i| tfidf.vectorize(&c.items[i].title)).collect();
    let train_slot: std::collections::HashMap<usize, usize> =
        train.iter().enumerate().map(|(s, &i)| (i, s)).collect();
    let pool_slots: Vec<usize> = pool.iter().map(|i| train_slot[i]).collect();

    // Inverted index over the pool: term -> (pool slot, weight).
    let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); tfidf.dim()];
    for (p, &slot) in pool_slots.iter().enumerate() {
        for &(t, w) in vectors[slot].entries() {
            postings[t as usize].push((p as u32, w));
        }
    }

    let mut dots = vec![0.0f64; pool.len()];
    let mut touched: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(train.len());
    for (slot, &i) in train.iter().enumerate() {
        let item = &c.items[i];
        let mut per_label = vec![0.0f64; k];
        for &(t, w) in vectors[slot].entries() {
            for &(p, wp) in &postings[t as usize] {
                if dots[p as usize] == 0.0 {
                    touched.push(p);
                }
                dots[p as usize] += w * wp;
            }
        }
        for &p in &touched {
            let other = &c.items[pool[p as usize]];
            if other.true_label != item.true_label {
                let s = dots[p as usize].clamp(0.0, 1.0);
                let best = &mut per_label[other.true_label];
                *best = best.max(s);
            }
            dots[p as usize] = 0.0;
        }
        touched.clear();
        if let Some(table) = emb {
            let a = table.get(item.id).ok_or(Error::MissingEmbedding(item.id))?;
            for &j in &pool {
                let other = &c.items[j];
                if other.true_label == item.true_label {
                    continue;
                }
                let b = table.get(other.id).ok_or(Error::MissingEmbedding(other.id))?;
                let s = a.cosine(b)?.clamp(0.0, 1.0);
                let best = &mut per_label[other.true_label];
                *best = best.max(s);
            }
        }
        out.push(MaxSim { id: item.id, label: item.true_label, per_label });
    }
    Ok(out)
}

/// Draws an index with probability proportional to `weights` using a uniform
/// `u` in `[0, 1)`. Zero-weight entries are never chosen; `None` if all are zero.
pub fn draw_weighted(weights: &[f64], u: f64) -> Option<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(k);
            if target < acc {
                return Some(k);
            }
        }
    }
    last
}

/// Similarity-based noise; see the module docs.
pub fn similarity_idn(
    c: &Corpus,
    tfidf: &TfIdfModel,
    emb: Option<&EmbeddingTable>,
    spec: &NoiseSpec,
) -> Result<NoiseResult> {
    spec.validate()?;
    let train = clean_train_positions(c)?;
    let labels_in_train = {
        let mut seen = vec![false; c.num_classes()];
        for &i in &train {
            seen[c.items[i].true_label] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if labels_in_train < 2 {
        return Err(Error::InvalidArgument("similarity noise needs at least 2 labels in train".into()));
    }
    let table = maxsim_table(c, tfidf, emb, &spec.params, spec.seed)?;
    let scored = drawn_scores(&table, &train, spec.seed);
    let count = round_half_up(spec.rate * train.len() as f64);
    if scored.len() < count {
        return Err(Error::UnattainableRate {
            target: spec.rate,
            min: 0.0,
            max: scored.len() as f64 / train.len() as f64,
        });
    }
    let chosen = top_scored(c, scored, count);
    Ok(commit(c, chosen, train.len(), NoiseMethod::Similarity, spec.seed, None))
}

/// For each item with any positive Maxsim: the drawn noisy label and its Maxsim.
fn drawn_scores(table: &[MaxSim], positions: &[usize], seed: u64) -> Vec<(usize, usize, f64)> {
    table
        .iter()
        .zip(positions)
        .filter_map(|(row, &pos)| {
            let mut weights = row.per_label.clone();
            weights[row.label] = 0.0;
            let u = rng::unit(rng::key(&[seed, streams::MULTINOMIAL, row.id]));
            draw_weighted(&weights, u).map(|drawn| (pos, drawn, weights[drawn]))
        })
        .collect()
}

/// Achieved rate and `K x K` transition counts (row = old label, column = new).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMeasurement {
    pub achieved_rate: f64,
    pub matrix: Vec<Vec<usize>>,
}

impl NoiseMeasurement {
    pub fn flips_from(&self, label: usize) -> usize {
        self.matrix[label].iter().sum()
    }
}

pub fn measure_noise(result: &NoiseResult) -> NoiseMeasurement {
    let k = result.corpus.num_classes();
    let mut matrix = vec![vec![0usize; k]; k];
    for f in &result.flips {
        matrix[f.old][f.new] += 1;
    }
    let n = result.corpus.train_len();
    NoiseMeasurement {
        achieved_rate: if n == 0 { 0.0 } else { result.flips.len() as f64 / n as f64 },
        matrix,
    }
}

/// One persisted flip; the only record holding true and noisy labels together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    #[serde(rename = "true")]
    pub true_label: String,
    pub noisy: String,
    pub score: f64,
    pub method: NoiseMethod,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlipManifest {
    pub entries: Vec<ManifestEntry>,
}

impl FlipManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        jsonl::write(path, &self.entries)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<FlipManifest> {
        Ok(FlipManifest { entries: jsonl::read(path)? })
    }

    /// Sets true labels of a snapshot-loaded corpus from the manifest; items
    /// absent from the manifest are taken to be clean.
    pub fn restore_truth(&self, c: &mut Corpus) -> Result<()> {
        let by_id = c.index_by_id();
        for e in &self.entries {
            let pos = *by_id
                .get(&e.id)
                .ok_or_else(|| Error::InvalidArgument(format!("manifest id {} not in corpus", e.id)))?;
            let label = c
                .label_index(&e.true_label)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown label {:?}", e.true_label)))?;
            c.items[pos].true_label = label;
        }
        Ok(())
    }
}
