//! Noise-resistant training: SEAL, PLC and CoTeaching+.
//!
//! All three read only observed labels. Test-split items are never trained on
//! and never edited.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, epoch_batches, example_loss, Example, SoftmaxClassifier, Target, TrainConfig, TrainLog, Trainer};
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::{macro_f1, EvalReport};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Base,
    Seal,
    Plc,
    CoteachingPlus,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 4] = [TrainerKind::Base, TrainerKind::Seal, TrainerKind::Plc, TrainerKind::CoteachingPlus];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainerKind::Base => "base",
            TrainerKind::Seal => "seal",
            TrainerKind::Plc => "plc",
            TrainerKind::CoteachingPlus => "coteaching_plus",
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        TrainerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown trainer {s:?}")))
    }
}

fn require_train(c: &Corpus) -> Result<()> {
    if c.num_classes() < 2 {
        return Err(Error::InvalidArgument("training needs at least 2 labels".into()));
    }
    if c.train_len() == 0 {
        return Err(Error::Empty("train split".into()));
    }
    Ok(())
}

/// Macro-F1 on the test split against observed labels, which equal the
/// true labels there.
fn test_report(m: &SoftmaxClassifier, c: &Corpus) -> Result<Option<EvalReport>> {
    let (pred, gold): (Vec<usize>, Vec<usize>) = c.test().map(|it| (m.predict(&it.title).top1, it.observed_label)).unzip();
    if gold.is_empty() {
        return Ok(None);
    }
    macro_f1(&pred, &gold, c.num_classes()).map(Some)
}

/// Item id to probability vector.
pub type SoftLabelTable = BTreeMap<u64, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SealConfig {
    pub iterations: usize,
    pub inner: TrainConfig,
}

impl Default for SealConfig {
    fn default() -> Self {
        SealConfig { iterations: 3, inner: TrainConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SealOutcome {
    pub model: SoftmaxClassifier,
    /// Test-split report after each iteration; empty if there is no test split.
    pub reports: Vec<EvalReport>,
    pub logs: Vec<TrainLog>,
    /// Soft labels produced by the last iteration.
    pub soft_labels: SoftLabelTable,
}

/// Iteration 0 trains on observed labels; each later iteration trains a fresh
/// model against the per-epoch mean predictions of the previous one.
pub fn train_seal(c: &Corpus, cfg: &SealConfig) -> Result<SealOutcome> {
    require_train(c)?;
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument("SEAL needs at least 1 iteration".into()));
    }
    let mut examples = Example::from_train_split(c, &cfg.inner.features);
    let k = c.num_classes();
    let mut reports = Vec::new();
    let mut logs = Vec::new();
    let mut model = None;
    let mut table = SoftLabelTable::new();
    for _ in 0..cfg.iterations {
        let mut sums = vec![vec![0.0; k]; examples.len()];
        let (m, log) = classifier::fit(&examples, k, &cfg.inner, |_, m| {
            for (ex, acc) in examples.iter().zip(&mut sums) {
                for (a, p) in acc.iter_mut().zip(m.probs_features(&ex.x)) {
                    *a += p;
                }
            }
            Ok(())
        })?;
        let epochs = cfg.inner.epochs as f64;
        table = examples
            .iter()
            .zip(sums)
            .map(|(ex, s)| (ex.id, s.into_iter().map(|v| v / epochs).collect()))
            .collect();
        for ex in &mut examples {
            ex.target = Target::Soft(table[&ex.id].clone());
        }
        reports.extend(test_report(&m, c)?);
        logs.push(log);
        model = Some(m);
    }
    Ok(SealOutcome { model: model.expect("iterations >= 1"), reports, logs, soft_labels: table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlcConfig {
    pub warmup_epochs: usize,
    pub correction_threshold: f64,
    pub threshold_step: f64,
    pub threshold_floor: f64,
    /// `inner.epochs` is the total epoch count, warm-up included.
    pub inner: TrainConfig,
}

impl Default for PlcConfig {
    fn default() -> Self {
        PlcConfig {
            warmup_epochs: 4,
            correction_threshold: 0.95,
            threshold_step: 0.05,
            threshold_floor: 0.80,
            inner: TrainConfig::default(),
        }
    }
}

impl PlcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs >= self.inner.epochs {
            return Err(Error::InvalidArgument(format!(
                "PLC warm-up ({}) must be shorter than training ({} epochs)",
                self.warmup_epochs, self.inner.epochs
            )));
        }
        if !(self.threshold_floor <= self.correction_threshold) || self.threshold_step < 0.0 {
            return Err(Error::InvalidArgument("PLC threshold floor must not exceed the initial threshold".into()));
        }
        Ok(())
    }

    /// Threshold in force after `epoch` (1-based), for epochs past warm-up.
    pub fn threshold_at(&self, epoch: usize) -> f64 {
        let decays = epoch.saturating_sub(self.warmup_epochs) as f64;
        (self.correction_threshold - decays * self.threshold_step).max(self.threshold_floor)
    }
}

/// One label edit made by PLC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub epoch: usize,
    pub id: u64,
    pub old: String,
    pub new: String,
    pub confidence: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct PlcOutcome {
    pub model: SoftmaxClassifier,
    /// The input corpus with the corrected observed labels.
    pub corpus: Corpus,
    pub corrections: Vec<Correction>,
    pub log: TrainLog,
}

/// Trains on observed labels; after each epoch from the end of warm-up on
/// (but not after the last), items predicted with confidence at least the
/// current threshold take the predicted label.
pub fn train_plc(c: &Corpus, cfg: &PlcConfig) -> Result<PlcOutcome> {
    require_train(c)?;
    cfg.validate()?;
    let mut examples = Example::from_train_split(c, &cfg.inner.features);
    let mut trainer = Trainer::new(c.num_classes(), &cfg.inner)?;
    let mut log = TrainLog::default();
    let mut corrections = Vec::new();
    let total = cfg.inner.epochs;
    for epoch in 1..=total {
        log.epochs.push(trainer.run_epoch(&examples, epoch)?);
        if epoch < cfg.warmup_epochs || epoch == total {
            continue;
        }
        let theta = cfg.threshold_at(epoch);
        for ex in &mut examples {
            let p = trainer.model().predict_features(&ex.x);
            let Target::Hard(old) = ex.target else { unreachable!("PLC uses hard targets") };
            if p.confidence >= theta && p.top1 != old {
                corrections.push(Correction {
                    epoch,
                    id: ex.id,
                    old: c.labels[old].clone(),
                    new: c.labels[p.top1].clone(),
                    confidence: p.confidence,
                    threshold: theta,
                });
                ex.target = Target::Hard(p.top1);
            }
        }
    }
    let mut corpus = c.clone();
    let labels: BTreeMap<u64, usize> = examples
        .iter()
        .map(|ex| match ex.target {
            Target::Hard(y) => (ex.id, y),
            Target::Soft(_) => unreachable!("PLC uses hard targets"),
        })
        .collect();
    for it in corpus.items.iter_mut().filter(|it| it.split == Split::Train) {
        it.observed_label = labels[&it.id];
    }
    Ok(PlcOutcome { model: trainer.into_model(), corpus, corrections, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtpConfig {
    /// Forget rate reached at the end of the ramp.
    pub estimated_noise_rate: f64,
    pub ramp_epochs: usize,
    /// Epochs at the start that select from whole batches instead of the
    /// disagreement pool.
    pub init_epochs: usize,
    /// Model 1 uses `inner.seed`; model 2 uses this, or `inner.seed + 1`.
    pub peer_seed: Option<u64>,
    pub inner: TrainConfig,
}

impl Default for CtpConfig {
    fn default() -> Self {
        CtpConfig { estimated_noise_rate: 0.2, ramp_epochs: 5, init_epochs: 0, peer_seed: None, inner: TrainConfig::default() }
    }
}

impl CtpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.estimated_noise_rate) {
            return Err(Error::InvalidArgument(format!(
                "estimated noise rate must be in [0, 1), got {}",
                self.estimated_noise_rate
            )));
        }
        if self.ramp_epochs == 0 {
            return Err(Error::InvalidArgument("ramp_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Fraction of the candidate pool kept in `epoch` (1-based).
    pub fn keep_fraction(&self, epoch: usize) -> f64 {
        let ramp = (epoch as f64 / self.ramp_epochs as f64).min(1.0);
        1.0 - self.estimated_noise_rate * ramp
    }

    fn peer_seed(&self) -> u64 {
        self.peer_seed.unwrap_or(self.inner.seed.wrapping_add(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    /// Items on which the two models disagree.
    Disagreement,
    /// The whole batch, used when the models agree everywhere.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: u64,
    pub loss: f64,
}

/// Small-loss selection made by one model for one batch; the peer model
/// trains on `selected`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub epoch: usize,
    pub batch: usize,
    /// 1 or 2: the model whose losses ranked the pool.
    pub model: u8,
    pub pool: Pool,
    pub keep_fraction: f64,
    pub selected: Vec<ScoredId>,
    pub rejected: Vec<ScoredId>,
}

#[derive(Debug, Clone)]
pub struct CtpOutcome {
    /// Used for evaluation.
    pub model: SoftmaxClassifier,
    pub peer: SoftmaxClassifier,
    pub selections: Vec<Selection>,
    pub logs: [TrainLog; 2],
}

/// Indices into `pool` of the `count` smallest losses, in pool order.
fn small_loss(pool: &[usize], losses: &[f64], count: usize) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..pool.len()).collect();
    ranked.sort_by(|&a, &b| losses[pool[a]].total_cmp(&losses[pool[b]]).then(a.cmp(&b)));
    ranked.truncate(count);
    ranked.sort_unstable();
    ranked
}

/// Two peer models; each ranks the disagreement pool of every batch by its
/// own loss and the other model updates on the smallest-loss fraction.
pub fn train_coteaching_plus(c: &Corpus, cfg: &CtpConfig) -> Result<CtpOutcome> {
    require_train(c)?;
    cfg.validate()?;
    let examples = Example::from_train_split(c, &cfg.inner.features);
    let ids: Vec<u64> = examples.iter().map(|e| e.id).collect();
    let k = c.num_classes();
    let mut trainers = [
        Trainer::new(k, &cfg.inner)?,
        Trainer::new(k, &cfg.inner.with_seed(cfg.peer_seed()))?,
    ];
    let mut logs = [TrainLog::default(), TrainLog::default()];
    let mut selections = Vec::new();

    for epoch in 1..=cfg.inner.epochs {
        let keep = cfg.keep_fraction(epoch);
        let mut loss_sum = [0.0f64; 2];
        let mut trained = [0usize; 2];
        let batches = epoch_batches(&ids, cfg.inner.seed, epoch, cfg.inner.batch_size);
        for (b, batch) in batches.iter().enumerate() {
            let mut losses = [vec![0.0; batch.len()], vec![0.0; batch.len()]];
            let mut argmax = [vec![0usize; batch.len()], vec![0usize; batch.len()]];
            for (slot, &i) in batch.iter().enumerate() {
                for m in 0..2 {
                    let model = trainers[m].model();
                    losses[m][slot] = example_loss(model, &examples[i]);
                    argmax[m][slot] = model.predict_features(&examples[i].x).top1;
                }
            }
            let disagree: Vec<usize> = (0..batch.len()).filter(|&s| argmax[0][s] != argmax[1][s]).collect();
            let (pool, kind) = if disagree.is_empty() || epoch <= cfg.init_epochs {
                ((0..batch.len()).collect::<Vec<_>>(), Pool::Batch)
            } else {
                (disagree, Pool::Disagreement)
            };
            let count = ((keep * pool.len() as f64).floor() as usize).max(1);

            let mut chosen: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for m in 0..2 {
                let picks = small_loss(&pool, &losses[m], count);
                let scored = |slot: usize| ScoredId { id: examples[batch[slot]].id, loss: losses[m][slot] };
                let mut is_pick = vec![false; pool.len()];
                picks.iter().for_each(|&p| is_pick[p] = true);
                selections.push(Selection {
                    epoch,
                    batch: b,
                    model: m as u8 + 1,
                    pool: kind,
                    keep_fraction: keep,
                    selected: picks.iter().map(|&p| scored(pool[p])).collect(),
                    rejected: (0..pool.len()).filter(|&p| !is_pick[p]).map(|p| scored(pool[p])).collect(),
                });
                chosen[m] = picks.iter().map(|&p| batch[pool[p]]).collect();
            }
            for m in 0..2 {
                let subset: Vec<&Example> = chosen[1 - m].iter().map(|&i| &examples[i]).collect();
                loss_sum[m] += trainers[m].step(&subset, epoch)? * subset.len() as f64;
                trained[m] += subset.len();
            }
        }
        for m in 0..2 {
            logs[m].epochs.push(classifier::EpochLog {
                epoch,
                mean_loss: loss_sum[m] / trained[m].max(1) as f64,
                steps: batches.len(),
            });
        }
    }
    let [t1, t2] = trainers;
    Ok(CtpOutcome { model: t1.into_model(), peer: t2.into_model(), selections, logs })
}

pub fn write_corrections(path: impl AsRef<Path>, corrections: &[Correction]) -> Result<()> {
    jsonl::write(path, corrections)
}

pub fn write_selections(path: impl AsRef<Path>, selections: &[Selection]) -> Result<()> {
    jsonl::write(path, selections)
}

pub fn write_train_log(path: impl AsRef<Path>, log: &TrainLog) -> Result<()> {
    jsonl::write(path, &log.epochs)
}
