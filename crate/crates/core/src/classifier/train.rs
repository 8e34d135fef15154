use serde::{Deserialize, Serialize};

use super::{FeatureSpec, HashedFeatures, SoftmaxClassifier};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Gradients whose global L2 norm exceeds this are rescaled to it.
    pub gradient_clip_norm: f64,
    pub hidden_size: usize,
    pub features: FeatureSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 5e-4,
            gradient_clip_norm: 5.0,
            hidden_size: 64,
            features: FeatureSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what} must be positive")));
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if !(self.gradient_clip_norm > 0.0) {
            return bad("gradient_clip_norm");
        }
        if self.hidden_size == 0 {
            return bad("hidden_size");
        }
        if self.features.dim == 0 || self.features.ngram_orders.is_empty() {
            return bad("feature dim and n-gram orders");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.clone() }
    }
}

/// Training target: a class index or a full probability vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Hard(usize),
    Soft(Vec<f64>),
}

impl Target {
    fn weight(&self, k: usize) -> f64 {
        match self {
            Target::Hard(y) => (*y == k) as u8 as f64,
            Target::Soft(q) => q[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub x: HashedFeatures,
    pub target: Target,
}

impl Example {
    /// Train-split items with their observed labels as hard targets.
    pub fn from_train_split(c: &Corpus, spec: &FeatureSpec) -> Vec<Example> {
        c.train()
            .map(|it| Example {
                id: it.id,
                x: spec.featurize(&it.title),
                target: Target::Hard(it.observed_label),
            })
            .collect()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Per-epoch permutation of example indices, keyed on `(seed, epoch, id)`
/// so that it does not depend on the order examples are stored in.
pub fn epoch_batches(ids: &[u64], seed: u64, epoch: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (rng::key(&[seed, streams::SHUFFLE, epoch as u64, ids[i]]), ids[i]));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Mean cross-entropy over `batch`; writes its gradient into `grad`.
pub(crate) fn accumulate(m: &SoftmaxClassifier, batch: &[&Example], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let l = m.layout();
    let h = m.hidden;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut dz = vec![0.0; m.classes];
    let mut dpre = vec![0.0; h];
    for ex in batch {
        let fw = m.forward(&ex.x);
        let max = fw.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + fw.logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let mut loss = 0.0;
        for k in 0..m.classes {
            let q = ex.target.weight(k);
            if q != 0.0 {
                loss += q * (lse - fw.logits[k]);
            }
            dz[k] = (fw.probs[k] - q) * scale;
        }
        total += loss;

        let w2 = &m.params[l.w2.clone()];
        dpre.iter_mut().for_each(|d| *d = 0.0);
        for k in 0..m.classes {
            grad[l.b2.start + k] += dz[k];
            let row = l.w2.start + k * h;
            for j in 0..h {
                grad[row + j] += dz[k] * fw.hidden[j];
                dpre[j] += w2[k * h + j] * dz[k];
            }
        }
        for j in 0..h {
            if fw.hidden[j] <= 0.0 {
                dpre[j] = 0.0;
            }
            grad[l.b1.start + j] += dpre[j];
        }
        for &(f, v) in &ex.x {
            let row = l.w1.start + f as usize * h;
            for j in 0..h {
                grad[row + j] += v * dpre[j];
            }
        }
    }
    total * scale
}

/// Cross-entropy of one example under `m`.
pub fn example_loss(m: &SoftmaxClassifier, ex: &Example) -> f64 {
    let logits = m.forward(&ex.x).logits;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    (0..m.classes)
        .map(|k| ex.target.weight(k))
        .zip(&logits)
        .filter(|(q, _)| *q != 0.0)
        .map(|(q, z)| q * (lse - z))
        .sum()
}

/// Mean cross-entropy of `(title, label)` pairs and its exact gradient with
/// respect to the flat parameter buffer.
pub fn loss_and_gradient(m: &SoftmaxClassifier, batch: &[(&str, usize)]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let examples: Vec<Example> = batch
        .iter()
        .enumerate()
        .map(|(i, &(title, y))| Example {
            id: i as u64,
            x: m.spec.featurize(title),
            target: Target::Hard(y),
        })
        .collect();
    Ok(loss_and_gradient_examples(m, &examples.iter().collect::<Vec<_>>()))
}

pub(crate) fn loss_and_gradient_examples(m: &SoftmaxClassifier, batch: &[&Example]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; m.params.len()];
    let loss = accumulate(m, batch, &mut grad);
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// A model together with its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: SoftmaxClassifier,
    adam: Adam,
    cfg: TrainConfig,
    steps: u64,
    grad: Vec<f64>,
}

impl Trainer {
    pub fn new(classes: usize, cfg: &TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let model = SoftmaxClassifier::init(cfg.features.clone(), cfg.hidden_size, classes, cfg.seed);
        let n = model.params.len();
        Ok(Trainer { model, adam: Adam::new(n), cfg: cfg.clone(), steps: 0, grad: vec![0.0; n] })
    }

    pub fn model(&self) -> &SoftmaxClassifier {
        &self.model
    }

    pub fn into_model(self) -> SoftmaxClassifier {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One clipped Adam update on the mean loss of `batch`; returns that loss.
    pub fn step(&mut self, batch: &[&Example], epoch: usize) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let loss = accumulate(&self.model, batch, &mut self.grad);
        self.steps += 1;
        if !loss.is_finite() {
            let (a1, a2) = self.model.init_bounds();
            return Err(Error::Diverged {
                epoch,
                step: self.steps,
                learning_rate: self.cfg.learning_rate,
                init_bound_hidden: a1,
                init_bound_output: a2,
            });
        }
        let norm = self.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > self.cfg.gradient_clip_norm {
            let s = self.cfg.gradient_clip_norm / norm;
            self.grad.iter_mut().for_each(|g| *g *= s);
        }
        self.adam.update(&mut self.model.params, &self.grad, self.cfg.learning_rate);
        Ok(loss)
    }

    /// One pass over `examples` in the seeded order for `epoch` (1-based).
    pub fn run_epoch(&mut self, examples: &[Example], epoch: usize) -> Result<EpochLog> {
        let ids: Vec<u64> = examples.iter().map(|e| e.id).collect();
        let mut weighted = 0.0;
        let batches = epoch_batches(&ids, self.cfg.seed, epoch, self.cfg.batch_size);
        for b in &batches {
            let batch: Vec<&Example> = b.iter().map(|&i| &examples[i]).collect();
            weighted += self.step(&batch, epoch)? * batch.len() as f64;
        }
        Ok(EpochLog {
            epoch,
            mean_loss: weighted / examples.len().max(1) as f64,
            steps: batches.len(),
        })
    }
}

/// Trains a fresh model on `examples` for `cfg.epochs` epochs, calling
/// `on_epoch(epoch, model)` after each one.
pub fn fit(
    examples: &[Example],
    classes: usize,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &SoftmaxClassifier) -> Result<()>,
) -> Result<(SoftmaxClassifier, TrainLog)> {
    if examples.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let mut trainer = Trainer::new(classes, cfg)?;
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        log.epochs.push(trainer.run_epoch(examples, epoch)?);
        on_epoch(epoch, trainer.model())?;
    }
    Ok((trainer.into_model(), log))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SoftmaxClassifier,
    pub checkpoints: super::CheckpointSequence,
    pub log: TrainLog,
}

/// Trains on the observed labels of the train split, keeping one checkpoint per epoch.
pub fn train(c: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if c.num_classes() < 2 {
        return Err(Error::InvalidArgument("training needs at least 2 labels".into()));
    }
    let examples = Example::from_train_split(c, &cfg.features);
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    let (model, log) = fit(&examples, c.num_classes(), cfg, |_, m| {
        checkpoints.push(m.clone());
        Ok(())
    })?;
    Ok(TrainOutcome { model, checkpoints, log })
}
