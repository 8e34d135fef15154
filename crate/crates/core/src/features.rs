//! Tokenization, Tf-Idf vectors and the title-similarity score used by
//! similarity-based noise.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::corpus::{Corpus, Item};
use crate::error::{Error, Result};

/// Lowercased alphanumeric runs, in order.
pub fn tokenize(title: &str) -> Vec<String> {
    title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
    dim: usize,
}

impl SparseVector {
    /// Builds a vector from unordered `(index, weight)` pairs, summing duplicates.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Result<SparseVector> {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, w) in pairs {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch { left: i as usize, right: dim });
            }
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => entries.push((i, w)),
            }
        }
        entries.retain(|&(_, w)| w != 0.0);
        Ok(SparseVector { entries, dim })
    }

    pub fn zero(dim: usize) -> SparseVector {
        SparseVector { entries: Vec::new(), dim }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        Ok(acc)
    }

    fn normalized(mut self) -> SparseVector {
        let n = self.norm();
        if n > 0.0 {
            for (_, w) in &mut self.entries {
                *w /= n;
            }
        }
        self
    }
}

/// Cosine similarity, defined as 0 when either side is the zero vector.
pub trait Cosine {
    fn cosine(&self, other: &Self) -> Result<f64>;
}

impl Cosine for SparseVector {
    fn cosine(&self, other: &Self) -> Result<f64> {
        let dot = self.dot(other)?;
        let denom = self.norm() * other.norm();
        Ok(if denom == 0.0 { 0.0 } else { (dot / denom).clamp(-1.0, 1.0) })
    }
}

impl Cosine for [f64] {
    fn cosine(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { left: self.len(), right: other.len() });
        }
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (&x, &y) in self.iter().zip(other) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        let denom = na.sqrt() * nb.sqrt();
        Ok(if denom == 0.0 { 0.0 } else { (dot / denom).clamp(-1.0, 1.0) })
    }
}

pub fn cosine<V: Cosine + ?Sized>(a: &V, b: &V) -> Result<f64> {
    a.cosine(b)
}

/// Unigram Tf-Idf with smoothed idf `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone)]
pub struct TfIdfModel {
    vocab: HashMap<String, u32>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl TfIdfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn term_index(&self, term: &str) -> Option<u32> {
        self.vocab.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_index(term).map(|i| self.idf[i as usize])
    }

    /// Raw term counts times idf, L2-normalized. Out-of-vocabulary terms are ignored.
    pub fn vectorize(&self, title: &str) -> SparseVector {
        let pairs = tokenize(title)
            .iter()
            .filter_map(|t| self.vocab.get(t.as_str()))
            .map(|&i| (i, self.idf[i as usize]))
            .collect();
        SparseVector::from_pairs(self.dim(), pairs)
            .expect("vocab indices are within dim")
            .normalized()
    }
}

pub fn fit_tfidf<'a>(titles: impl IntoIterator<Item = &'a str>) -> Result<TfIdfModel> {
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let mut df: Vec<usize> = Vec::new();
    let mut n = 0usize;
    for title in titles {
        n += 1;
        let mut seen = tokenize(title);
        seen.sort_unstable();
        seen.dedup();
        // First-seen order in the title decides index assignment.
        for t in tokenize(title) {
            if !vocab.contains_key(&t) {
                vocab.insert(t, df.len() as u32);
                df.push(0);
            }
        }
        for t in &seen {
            df[vocab[t] as usize] += 1;
        }
    }
    if vocab.is_empty() {
        return Err(Error::Empty("tf-idf training titles".into()));
    }
    let idf = df
        .iter()
        .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    Ok(TfIdfModel { vocab, idf, doc_count: n })
}

/// Fits Tf-Idf on the train split of a corpus.
pub fn fit_tfidf_on_train(c: &Corpus) -> Result<TfIdfModel> {
    fit_tfidf(c.train().map(|it| it.title.as_str()))
}

/// Precomputed title embeddings keyed by item id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    width: usize,
    vectors: HashMap<u64, Vec<f64>>,
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    id: u64,
    vec: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(width: usize) -> Self {
        EmbeddingTable { width, vectors: HashMap::new() }
    }

    pub fn insert(&mut self, id: u64, v: Vec<f64>) -> Result<()> {
        if v.len() != self.width {
            return Err(Error::DimensionMismatch { left: v.len(), right: self.width });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("embedding {id} is not finite")));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    /// Reads `{"id": .., "vec": [..]}` lines; every vector must have the same width.
    pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<EmbeddingTable> = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = n as u64 + 1;
            let rec: EmbeddingRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Malformed { line: line_no, message: e.to_string() })?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(rec.vec.len()));
            t.insert(rec.id, rec.vec)
                .map_err(|e| Error::Malformed { line: line_no, message: e.to_string() })?;
        }
        table.ok_or_else(|| Error::Empty(path.display().to_string()))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&[f64]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    /// Ensures every train-split item has a vector.
    pub fn check_covers_train(&self, c: &Corpus) -> Result<()> {
        match c.train().find(|it| !self.vectors.contains_key(&it.id)) {
            Some(it) => Err(Error::MissingEmbedding(it.id)),
            None => Ok(()),
        }
    }
}

/// Title similarity in `[0, 1]`: the larger of the clamped Tf-Idf cosine and,
/// when embeddings are supplied, the clamped embedding cosine.
pub fn similarity(
    i: &Item,
    j: &Item,
    tfidf: &TfIdfModel,
    emb: Option<&EmbeddingTable>,
) -> Result<f64> {
    let lexical = tfidf.vectorize(&i.title).cosine(&tfidf.vectorize(&j.title))?;
    let semantic = match emb {
        Some(table) => {
            let a = table.get(i.id).ok_or(Error::MissingEmbedding(i.id))?;
            let b = table.get(j.id).ok_or(Error::MissingEmbedding(j.id))?;
            Some(a.cosine(b)?)
        }
        None => None,
    };
    Ok(combine_similarity(lexical, semantic))
}

/// Max rule over the two cosine sources, each clamped to `[0, 1]`.
pub fn combine_similarity(lexical: f64, semantic: Option<f64>) -> f64 {
    let l = lexical.clamp(0.0, 1.0);
    match semantic {
        Some(s) => l.max(s.clamp(0.0, 1.0)),
        None => l,
    }
}
