//! Synthetic product-title corpora with controllable ambiguity.
//!
//! Each class owns a vocabulary of pseudo-words drawn with Zipfian frequency.
//! Every item also has an ambiguity level `a`: each content word comes from
//! a confuser class with probability `a`, so items with high `a` look like
//! two classes at once. Generic words shared by all classes and a unique SKU
//! token per item complete the title.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusBuilder};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

const SYLLABLES: [&str; 24] = [
    "ba", "ko", "ri", "te", "mu", "sa", "lo", "vi", "ne", "du", "pa", "zo", "fi", "gu", "he", "ja",
    "ly", "mo", "ni", "qu", "ro", "si", "tu", "we",
];

const CATEGORIES: [&str; 10] = [
    "audio", "bakery", "cookware", "footwear", "stationery", "toys", "garden", "lighting", "luggage", "watches",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub items: usize,
    /// Distinct content words per class.
    pub vocab_per_class: usize,
    /// Generic words available to every class.
    pub shared_vocab: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Generic words per title.
    pub generic_words: usize,
    /// Ambiguity is `max_ambiguity * u^ambiguity_power` for uniform `u`.
    pub max_ambiguity: f64,
    pub ambiguity_power: f64,
    /// Each class draws confuser words from this many other classes.
    pub confusers: usize,
    /// Appends a unique stock-keeping token to every title.
    pub sku: bool,
    /// Class sizes decay geometrically by this factor (1 = balanced).
    pub size_decay: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 5,
            items: 2_000,
            vocab_per_class: 40,
            shared_vocab: 20,
            min_words: 5,
            max_words: 10,
            generic_words: 1,
            max_ambiguity: 0.6,
            ambiguity_power: 1.5,
            confusers: 1,
            sku: true,
            size_decay: 1.0,
            seed: 0,
        }
    }
}

/// A generated corpus together with each item's ambiguity level.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub ambiguity: Vec<f64>,
}

fn pseudo_words(count: usize, salt: u64, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut r = rng::stream(rng::key(&[salt, streams::SYNTH]));
    while out.len() < count {
        let n = r.gen_range(2..=3);
        let w: String = (0..n).map(|_| SYLLABLES[r.gen_range(0..SYLLABLES.len())]).collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn class_sizes(cfg: &SynthConfig) -> Vec<usize> {
    let weights: Vec<f64> = (0..cfg.classes).map(|k| cfg.size_decay.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights.iter().map(|w| (w / total * cfg.items as f64).floor() as usize).collect();
    let mut k = 0;
    while sizes.iter().sum::<usize>() < cfg.items {
        sizes[k % cfg.classes] += 1;
        k += 1;
    }
    sizes
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("synthetic corpus needs at least 2 classes".into()));
    }
    if cfg.vocab_per_class == 0 || cfg.min_words == 0 || cfg.min_words > cfg.max_words {
        return Err(Error::InvalidArgument("synthetic corpus needs words".into()));
    }
    if cfg.confusers >= cfg.classes || !(0.0..=1.0).contains(&cfg.max_ambiguity) {
        return Err(Error::InvalidArgument("confusers must be fewer than classes and ambiguity in [0, 1]".into()));
    }
    if !(cfg.size_decay > 0.0 && cfg.size_decay <= 1.0) {
        return Err(Error::InvalidArgument("size_decay must be in (0, 1]".into()));
    }
    let mut taken = HashSet::new();
    let vocab: Vec<Vec<String>> = (0..cfg.classes)
        .map(|k| pseudo_words(cfg.vocab_per_class, rng::key(&[cfg.seed, k as u64]), &mut taken))
        .collect();
    let generic = pseudo_words(cfg.shared_vocab, rng::key(&[cfg.seed, u64::MAX]), &mut taken);
    let zipf = WeightedIndex::new((0..cfg.vocab_per_class).map(|j| 1.0 / (j + 1) as f64)).expect("positive weights");

    let names: Vec<String> = (0..cfg.classes)
        .map(|k| CATEGORIES.get(k).map_or_else(|| format!("class{k}"), |s| s.to_string()))
        .collect();
    let sizes = class_sizes(cfg);
    let mut builder = CorpusBuilder::default();
    let mut ambiguity = Vec::with_capacity(cfg.items);
    let mut id = 0u64;
    let mut remaining = sizes.clone();
    // Interleave classes so ids do not cluster by label.
    while remaining.iter().any(|&r| r > 0) {
        for k in 0..cfg.classes {
            if remaining[k] == 0 {
                continue;
            }
            remaining[k] -= 1;
            let mut r = rng::stream(rng::key(&[cfg.seed, streams::SYNTH, id]));
            let a = cfg.max_ambiguity * r.gen::<f64>().powf(cfg.ambiguity_power);
            let len = r.gen_range(cfg.min_words..=cfg.max_words);
            let mut words: Vec<&str> = Vec::with_capacity(len + cfg.generic_words + 1);
            for _ in 0..len {
                let source = if r.gen::<f64>() < a {
                    (k + 1 + r.gen_range(0..cfg.confusers)) % cfg.classes
                } else {
                    k
                };
                words.push(&vocab[source][zipf.sample(&mut r)]);
            }
            for _ in 0..cfg.generic_words.min(generic.len()) {
                let g = &generic[r.gen_range(0..generic.len())];
                let at = r.gen_range(0..=words.len());
                words.insert(at, g);
            }
            let sku = format!("sku{id:05}");
            if cfg.sku {
                words.push(&sku);
            }
            builder
                .push(id, &words.join(" "), &names[k])
                .map_err(|message| Error::Malformed { line: id + 1, message })?;
            ambiguity.push(a);
            id += 1;
        }
    }
    let corpus = builder.finish(format!("synthetic:seed={}", cfg.seed));
    Ok(SynthCorpus { corpus, ambiguity })
}
