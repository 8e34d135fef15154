//! Word-dropping title corruption and certainty-based relabel/remove denoising.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{Prediction, SoftmaxClassifier};
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::noise::FlipManifest;

/// Letters that must be dropped from each side before stopping.
const DROP_LETTERS: usize = 5;
/// Side drops stop once fewer than this many words remain.
const MIN_WORDS: usize = 4;
/// Trailing words are trimmed down to this length.
const MAX_WORDS: usize = 15;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Corrupts a title by dropping words from both ends.
///
/// Leading words are removed one at a time until the removed words hold at
/// least five non-whitespace characters or fewer than four words remain; the
/// same is then done from the right, and finally trailing words are removed
/// while more than fifteen remain. Both guards are checked before each drop.
///
/// The result is the slice of `title` spanning the kept words, so inner
/// whitespace is preserved.
pub fn drop_words(title: &str) -> &str {
    let words: Vec<(usize, &str)> = title
        .split_whitespace()
        .map(|w| (w.as_ptr() as usize - title.as_ptr() as usize, w))
        .collect();
    if words.is_empty() {
        return title;
    }
    let letters = |w: &str| w.chars().count();
    let (mut lo, mut hi) = (0usize, words.len());

    let mut dropped = 0;
    while dropped < DROP_LETTERS && hi - lo >= MIN_WORDS {
        dropped += letters(words[lo].1);
        lo += 1;
    }
    let mut dropped = 0;
    while dropped < DROP_LETTERS && hi - lo >= MIN_WORDS {
        hi -= 1;
        dropped += letters(words[hi].1);
    }
    while hi - lo > MAX_WORDS {
        hi -= 1;
    }

    let start = words[lo].0;
    let (last_off, last) = words[hi - 1];
    &title[start..last_off + last.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Relabel,
    Remove,
    Keep,
}

/// Decision for one train item given predictions on its original and
/// corrupted titles. Confident beats certain beats removal.
pub fn decide(original: &Prediction, dropped: &Prediction, observed: usize, threshold: f64) -> (Action, usize) {
    let (lo, po) = (original.top1, original.confidence);
    let (ld, pd) = (dropped.top1, dropped.confidence);
    if po >= threshold || lo == ld {
        let action = if lo == observed { Action::Keep } else { Action::Relabel };
        (action, lo)
    } else if po <= threshold && pd <= threshold {
        (Action::Remove, observed)
    } else {
        (Action::Keep, observed)
    }
}

/// One line of the denoise audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: u64,
    pub action: Action,
    #[serde(rename = "L_o")]
    pub l_o: String,
    #[serde(rename = "P_o")]
    pub p_o: f64,
    #[serde(rename = "L_d")]
    pub l_d: String,
    #[serde(rename = "P_d")]
    pub p_d: f64,
}

/// Counts of relabel and removal outcomes measured against the true labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthCounts {
    pub noisy_before: usize,
    /// Noisy items relabeled to their true label.
    pub fixed: usize,
    /// Clean items relabeled to a wrong label.
    pub introduced: usize,
    /// Noisy items relabeled to another wrong label.
    pub moved: usize,
    pub removed_noisy: usize,
    pub removed_clean: usize,
}

impl TruthCounts {
    pub fn noisy_after(&self) -> usize {
        self.noisy_before + self.introduced - self.fixed - self.removed_noisy
    }

    /// Relative drop in noise rate, where the rate after denoising is taken
    /// over the surviving train items.
    pub fn noise_reduction(&self, train_before: usize) -> Option<f64> {
        if self.noisy_before == 0 || train_before == 0 {
            return None;
        }
        let before = self.noisy_before as f64 / train_before as f64;
        let remaining = train_before - self.removed_noisy - self.removed_clean;
        let after = if remaining == 0 { 0.0 } else { self.noisy_after() as f64 / remaining as f64 };
        Some((before - after) / before)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub relabeled: usize,
    pub removed: usize,
    pub kept_unchanged: usize,
    pub data_reduction: f64,
    pub noise_reduction: Option<f64>,
    pub truth: Option<TruthCounts>,
    /// Labels that had train items before denoising and none after.
    pub emptied_classes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub corpus: Corpus,
    pub report: DenoiseReport,
    pub audit: Vec<AuditEntry>,
}

/// Denoises the train split of `c` with model `m` without any ground truth.
pub fn denoise(c: &Corpus, m: &SoftmaxClassifier, threshold: f64) -> Result<DenoiseOutcome> {
    run(c, m, threshold, None)
}

/// Like [`denoise`], additionally measuring the effect against the true
/// labels recorded in a flip manifest.
pub fn denoise_with_manifest(
    c: &Corpus,
    m: &SoftmaxClassifier,
    threshold: f64,
    manifest: &FlipManifest,
) -> Result<DenoiseOutcome> {
    run(c, m, threshold, Some(manifest))
}

fn run(c: &Corpus, m: &SoftmaxClassifier, threshold: f64, manifest: Option<&FlipManifest>) -> Result<DenoiseOutcome> {
    if m.num_classes() != c.num_classes() {
        return Err(Error::LabelSpaceMismatch { expected: c.num_classes(), found: m.num_classes() });
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let truth = manifest.map(|mf| truth_by_id(c, mf)).transpose()?;

    let mut out = c.clone();
    out.items.clear();
    let mut audit = Vec::new();
    let (mut relabeled, mut removed, mut kept) = (0, 0, 0);
    let mut counts = TruthCounts::default();
    let mut before = vec![0usize; c.num_classes()];
    let mut after = vec![0usize; c.num_classes()];

    for it in &c.items {
        if it.split != Split::Train {
            out.items.push(it.clone());
            continue;
        }
        before[it.observed_label] += 1;
        let po = m.predict(&it.title);
        let pd = m.predict(drop_words(&it.title));
        let (action, label) = decide(&po, &pd, it.observed_label, threshold);
        audit.push(AuditEntry {
            id: it.id,
            action,
            l_o: c.labels[po.top1].clone(),
            p_o: po.confidence,
            l_d: c.labels[pd.top1].clone(),
            p_d: pd.confidence,
        });

        let true_label = truth.as_ref().map(|t| t.get(&it.id).copied().unwrap_or(it.observed_label));
        let was_noisy = true_label.map(|t| t != it.observed_label);
        if was_noisy == Some(true) {
            counts.noisy_before += 1;
        }
        match action {
            Action::Remove => {
                removed += 1;
                match was_noisy {
                    Some(true) => counts.removed_noisy += 1,
                    Some(false) => counts.removed_clean += 1,
                    None => {}
                }
                continue;
            }
            Action::Keep => kept += 1,
            Action::Relabel => {
                relabeled += 1;
                if let Some(t) = true_label {
                    if t == it.observed_label {
                        counts.introduced += 1;
                    } else if t == label {
                        counts.fixed += 1;
                    } else {
                        counts.moved += 1;
                    }
                }
            }
        }
        let mut kept_item = it.clone();
        kept_item.observed_label = label;
        after[label] += 1;
        out.items.push(kept_item);
    }

    let n = relabeled + removed + kept;
    let emptied_classes = (0..c.num_classes())
        .filter(|&k| before[k] > 0 && after[k] == 0)
        .map(|k| c.labels[k].clone())
        .collect();
    let report = DenoiseReport {
        relabeled,
        removed,
        kept_unchanged: kept,
        data_reduction: if n == 0 { 0.0 } else { removed as f64 / n as f64 },
        noise_reduction: truth.as_ref().and_then(|_| counts.noise_reduction(n)),
        truth: truth.map(|_| counts),
        emptied_classes,
    };
    Ok(DenoiseOutcome { corpus: out, report, audit })
}

fn truth_by_id(c: &Corpus, manifest: &FlipManifest) -> Result<HashMap<u64, usize>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            c.label_index(&e.true_label)
                .map(|k| (e.id, k))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown label {:?} in manifest", e.true_label)))
        })
        .collect()
}

pub fn write_audit(path: impl AsRef<Path>, audit: &[AuditEntry]) -> Result<()> {
    jsonl::write(path, audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{self, FeatureSpec, Target, TrainConfig};
    use crate::noise::{multi_epoch_idn, NoiseMethod, NoiseSpec};

    fn pred(probs: &[f64]) -> Prediction {
        Prediction::from_probs(probs.to_vec())
    }

    #[test]
    fn short_titles_pass_through() {
        assert_eq!(drop_words("alpha beta gamma"), "alpha beta gamma");
        assert_eq!(drop_words("one"), "one");
        assert_eq!(drop_words(""), "");
        assert_eq!(drop_words("   "), "   ");
    }

    #[test]
    fn two_letter_words() {
        assert_eq!(drop_words("AB CD EF GH IJ KL"), "GH IJ KL");
    }

    #[test]
    fn long_title_trimmed_to_fifteen() {
        let words: Vec<String> = (0..20).map(|i| format!("longword{i:02}")).collect();
        let title = words.join(" ");
        let out = drop_words(&title);
        let kept: Vec<&str> = out.split_whitespace().collect();
        assert_eq!(kept.len(), 15);
        assert_eq!(kept[0], "longword01");
        assert_eq!(kept[14], "longword15");
    }

    #[test]
    fn four_words_drop_one_each_side_when_long() {
        assert_eq!(drop_words("apples bananas cherries dates"), "bananas cherries dates");
        assert_eq!(drop_words("a b c d e f g h"), "f g h");
    }

    #[test]
    fn decisions() {
        // Confident and already agreeing: unchanged.
        assert_eq!(decide(&pred(&[0.95, 0.05]), &pred(&[0.4, 0.6]), 0, 0.8), (Action::Keep, 0));
        // Confident and disagreeing with the observed label.
        assert_eq!(decide(&pred(&[0.95, 0.05]), &pred(&[0.4, 0.6]), 1, 0.8), (Action::Relabel, 0));
        // Neither confident nor certain, both low.
        assert_eq!(decide(&pred(&[0.6, 0.4]), &pred(&[0.5, 0.5 + 1e-9]), 0, 0.8).0, Action::Remove);
        // Certain but not confident.
        assert_eq!(decide(&pred(&[0.3, 0.7]), &pred(&[0.4, 0.6]), 0, 0.8), (Action::Relabel, 1));
        // Exactly at threshold: confident wins over removal.
        assert_eq!(decide(&pred(&[0.8, 0.2]), &pred(&[0.1, 0.9]), 1, 0.8), (Action::Relabel, 0));
        // Uncovered cell: not confident, disagreeing, confident on the corruption.
        assert_eq!(decide(&pred(&[0.6, 0.4]), &pred(&[0.1, 0.9]), 0, 0.8), (Action::Keep, 0));
    }

    /// A model whose prediction depends only on the first word of the title.
    fn word_model(words: &[(&str, usize, f64)], classes: usize) -> SoftmaxClassifier {
        let spec = FeatureSpec { ngram_orders: vec![1], dim: 64 };
        let examples: Vec<classifier::Example> = words
            .iter()
            .enumerate()
            .map(|(i, (w, k, conf))| {
                let mut p = vec![(1.0 - conf) / (classes - 1) as f64; classes];
                p[*k] = *conf;
                classifier::Example { id: i as u64, x: spec.featurize(w), target: Target::Soft(p) }
            })
            .collect();
        let cfg = TrainConfig { epochs: 400, batch_size: 8, learning_rate: 0.05, hidden_size: 16, features: spec, seed: 1, ..TrainConfig::default() };
        classifier::fit(&examples, classes, &cfg, |_, _| Ok(())).unwrap().0
    }

    #[test]
    fn relabel_remove_and_report_accounting() {
        let labels = ["x", "y"];
        let titles = [("alpha", 0), ("alpha", 1), ("beta", 1), ("gamma", 0), ("gamma", 1)];
        let mut c = Corpus::from_pairs(titles.iter().map(|(t, k)| (*t, labels[*k]))).unwrap();
        c.labels = vec!["x".into(), "y".into()];
        for (it, (_, k)) in c.items.iter_mut().zip(titles) {
            it.true_label = k;
            it.observed_label = k;
        }
        let m = word_model(&[("alpha", 0, 0.97), ("beta", 1, 0.97), ("gamma", 0, 0.6)], 2);
        assert!(m.predict("gamma").confidence < 0.8);
        let out = denoise(&c, &m, 0.8).unwrap();
        let r = &out.report;
        assert_eq!(r.relabeled + r.removed + r.kept_unchanged, 5);
        // "alpha"/y relabeled; the single-word gamma titles are certain (the
        // corruption is the title itself), so gamma/y is relabeled too.
        assert_eq!(r.relabeled, 2);
        assert_eq!(r.removed, 0);
        assert_eq!(r.noise_reduction, None);
        assert!(out.corpus.items.iter().all(|it| it.observed_label == 0 || it.title == "beta"));
        assert_eq!(out.audit.len(), 5);
    }

    #[test]
    fn noise_reduction_consistent_with_counts() {
        let mut pairs = Vec::new();
        for i in 0..60 {
            pairs.push((format!("alpha item{i} filler words here"), "x"));
            pairs.push((format!("beta item{i} filler words here"), "y"));
        }
        let c = Corpus::from_pairs(pairs.iter().map(|(t, l)| (t.as_str(), *l))).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            hidden_size: 8,
            features: FeatureSpec { ngram_orders: vec![1], dim: 256 },
            ..TrainConfig::default()
        };
        let clean = classifier::train(&c, &cfg).unwrap();
        let noisy = multi_epoch_idn(&c, &clean.checkpoints, &NoiseSpec::new(NoiseMethod::MultiEpoch, 0.2, 3)).unwrap();
        let model = classifier::train(&noisy.corpus, &cfg).unwrap().model;
        let out = denoise_with_manifest(&noisy.corpus, &model, 0.8, &noisy.manifest()).unwrap();
        let r = &out.report;
        let t = r.truth.unwrap();
        assert_eq!(t.noisy_before, noisy.flips.len());
        assert_eq!(t.fixed + t.introduced + t.moved, r.relabeled);
        assert_eq!(t.removed_noisy + t.removed_clean, r.removed);
        let remaining = out.corpus.train_len();
        let actual_after = out.corpus.train().filter(|it| it.is_noisy()).count();
        assert_eq!(actual_after, t.noisy_after());
        let before = t.noisy_before as f64 / 120.0;
        let after = actual_after as f64 / remaining as f64;
        assert_eq!(r.noise_reduction, Some((before - after) / before));
        // Titles and true labels untouched.
        for it in out.corpus.items.iter() {
            let orig = &noisy.corpus.items[noisy.corpus.index_by_id()[&it.id]];
            assert_eq!((&it.title, it.true_label), (&orig.title, orig.true_label));
        }
    }

    #[test]
    fn second_pass_is_stable_for_fixed_model() {
        let labels = ["x", "y"];
        let titles = [("alpha", 0), ("alpha", 1), ("beta", 1), ("gamma delta eps zeta", 0)];
        let c = Corpus::from_pairs(titles.iter().map(|(t, k)| (*t, labels[*k]))).unwrap();
        let m = word_model(&[("alpha", 0, 0.97), ("beta", 1, 0.97)], 2);
        let once = denoise(&c, &m, 0.8).unwrap();
        let twice = denoise(&once.corpus, &m, 0.8).unwrap();
        assert_eq!(twice.report.removed, 0);
        assert_eq!(twice.report.relabeled, 0);
        assert_eq!(twice.corpus, once.corpus);
    }

    #[test]
    fn audit_log_schema() {
        let e = AuditEntry { id: 3, action: Action::Remove, l_o: "x".into(), p_o: 0.5, l_d: "y".into(), p_d: 0.6 };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"id":3,"action":"remove","L_o":"x","P_o":0.5,"L_d":"y","P_d":0.6}"#);
    }
}
