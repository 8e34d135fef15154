//! The base classifier: hashed word n-grams feeding one rectifier hidden
//! layer and a softmax output, trained with mini-batch Adam on cross-entropy.
//!
//! Everything downstream (noise simulation, denoising, robust trainers) only
//! consumes softmax confidences and per-epoch checkpoints, so the model is
//! deliberately small and fully deterministic given its seed.

mod blob;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::rng;

pub use blob::{load_model, read_model, save_model, write_model, ModelBlob};
pub use train::{
    epoch_batches, example_loss, fit, loss_and_gradient, train, Adam, EpochLog, Example, Target, TrainConfig,
    TrainLog, TrainOutcome, Trainer,
};

/// Which word n-grams are hashed and into how many buckets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub ngram_orders: Vec<usize>,
    pub dim: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { ngram_orders: vec![1, 2], dim: 1 << 14 }
    }
}

/// Hashed n-gram counts, sorted by bucket.
pub type HashedFeatures = Vec<(u32, f64)>;

impl FeatureSpec {
    pub fn featurize(&self, title: &str) -> HashedFeatures {
        let tokens = tokenize(title);
        let mut buckets: Vec<u32> = Vec::new();
        let mut gram = String::new();
        for &n in &self.ngram_orders {
            if n == 0 || tokens.len() < n {
                continue;
            }
            for window in tokens.windows(n) {
                gram.clear();
                gram.push_str(&n.to_string());
                for t in window {
                    gram.push('\u{1f}');
                    gram.push_str(t);
                }
                buckets.push((rng::fnv1a(gram.as_bytes()) % self.dim as u64) as u32);
            }
        }
        buckets.sort_unstable();
        let mut out: HashedFeatures = Vec::with_capacity(buckets.len());
        for b in buckets {
            match out.last_mut() {
                Some((i, c)) if *i == b => *c += 1.0,
                _ => out.push((b, 1.0)),
            }
        }
        out
    }
}

/// Softmax output over the label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub top1: usize,
    pub top2: usize,
    pub confidence: f64,
}

impl Prediction {
    /// Ranks a probability vector; ties go to the lower label index.
    pub fn from_probs(probs: Vec<f64>) -> Prediction {
        let mut top1 = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[top1] {
                top1 = k;
            }
        }
        let mut top2 = if top1 == 0 && probs.len() > 1 { 1 } else { 0 };
        for (k, &p) in probs.iter().enumerate() {
            if k != top1 && p > probs[top2] {
                top2 = k;
            }
        }
        let confidence = probs[top1];
        Prediction { probs, top1, top2, confidence }
    }
}

/// Parameters live in one flat buffer laid out as
/// `[w1 (dim x hidden, feature-major) | b1 | w2 (classes x hidden) | b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    spec: FeatureSpec,
    hidden: usize,
    classes: usize,
    params: Vec<f64>,
}

pub(crate) struct Layout {
    pub w1: std::ops::Range<usize>,
    pub b1: std::ops::Range<usize>,
    pub w2: std::ops::Range<usize>,
    pub b2: std::ops::Range<usize>,
}

pub(crate) fn layout(dim: usize, hidden: usize, classes: usize) -> Layout {
    let w1 = 0..dim * hidden;
    let b1 = w1.end..w1.end + hidden;
    let w2 = b1.end..b1.end + classes * hidden;
    let b2 = w2.end..w2.end + classes;
    Layout { w1, b1, w2, b2 }
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct Forward {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SoftmaxClassifier {
    /// A model with every parameter set to zero (uniform predictions).
    pub fn zeros(spec: FeatureSpec, hidden: usize, classes: usize) -> Self {
        let n = layout(spec.dim, hidden, classes).b2.end;
        SoftmaxClassifier { spec, hidden, classes, params: vec![0.0; n] }
    }

    /// Glorot-uniform weights and zero biases, drawn from a seeded stream.
    pub fn init(spec: FeatureSpec, hidden: usize, classes: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut m = Self::zeros(spec, hidden, classes);
        let l = m.layout();
        let (a1, a2) = m.init_bounds();
        let mut g = rng::stream(rng::key(&[seed, rng::streams::INIT]));
        for p in &mut m.params[l.w1] {
            *p = g.gen_range(-a1..a1);
        }
        for p in &mut m.params[l.w2] {
            *p = g.gen_range(-a2..a2);
        }
        m
    }

    pub(crate) fn init_bounds(&self) -> (f64, f64) {
        (
            (6.0 / (self.spec.dim + self.hidden) as f64).sqrt(),
            (6.0 / (self.hidden + self.classes) as f64).sqrt(),
        )
    }

    pub(crate) fn from_parts(
        spec: FeatureSpec,
        hidden: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let n = layout(spec.dim, hidden, classes).b2.end;
        if params.len() != n {
            return Err(Error::ModelFormat(format!("expected {n} parameters, found {}", params.len())));
        }
        Ok(SoftmaxClassifier { spec, hidden, classes, params })
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn layout(&self) -> Layout {
        layout(self.spec.dim, self.hidden, self.classes)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn forward(&self, x: &[(u32, f64)]) -> Forward {
        let l = self.layout();
        let h = self.hidden;
        let mut hidden = self.params[l.b1.clone()].to_vec();
        let w1 = &self.params[l.w1];
        for &(f, v) in x {
            let row = &w1[f as usize * h..(f as usize + 1) * h];
            for (a, &w) in hidden.iter_mut().zip(row) {
                *a += v * w;
            }
        }
        for a in &mut hidden {
            *a = a.max(0.0);
        }
        let w2 = &self.params[l.w2];
        let mut logits = self.params[l.b2].to_vec();
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &w2[k * h..(k + 1) * h];
            *z += row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>();
        }
        let probs = softmax(&logits);
        Forward { hidden, logits, probs }
    }

    pub fn predict(&self, title: &str) -> Prediction {
        self.predict_features(&self.spec.featurize(title))
    }

    pub fn predict_features(&self, x: &[(u32, f64)]) -> Prediction {
        Prediction::from_probs(self.forward(x).probs)
    }

    pub fn probs_features(&self, x: &[(u32, f64)]) -> Vec<f64> {
        self.forward(x).probs
    }
}

pub fn predict(m: &SoftmaxClassifier, title: &str) -> Prediction {
    m.predict(title)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// One model snapshot per completed epoch.
pub type CheckpointSequence = Vec<SoftmaxClassifier>;

/// Elementwise mean of the models' probability vectors for one title.
pub fn average_predictions(models: &[SoftmaxClassifier], title: &str) -> Result<Prediction> {
    let first = models.first().ok_or_else(|| Error::InvalidArgument("no models to average".into()))?;
    let x = first.spec.featurize(title);
    average_predictions_features(models, &x, |m| {
        if m.spec == first.spec {
            None
        } else {
            Some(m.spec.featurize(title))
        }
    })
}

/// Averages over models given features computed under the first model's
/// spec; `refeaturize` supplies features for any model whose spec differs.
pub(crate) fn average_predictions_features(
    models: &[SoftmaxClassifier],
    x: &[(u32, f64)],
    refeaturize: impl Fn(&SoftmaxClassifier) -> Option<HashedFeatures>,
) -> Result<Prediction> {
    let k = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("no models to average".into()))?
        .classes;
    let mut acc = vec![0.0; k];
    for m in models {
        if m.classes != k {
            return Err(Error::LabelSpaceMismatch { expected: k, found: m.classes });
        }
        let probs = match refeaturize(m) {
            Some(own) => m.probs_features(&own),
            None => m.probs_features(x),
        };
        for (a, p) in acc.iter_mut().zip(probs) {
            *a += p;
        }
    }
    let n = models.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(Prediction::from_probs(acc))
}
