//! Versioned binary model blob: magic, JSON header, raw little-endian
//! parameters. Parameters round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureSpec, SoftmaxClassifier, TrainConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"IDNLMDL\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    feature_spec: FeatureSpec,
    hidden: usize,
    classes: usize,
    labels: Vec<String>,
    train_config: Option<TrainConfig>,
}

/// A model plus the metadata stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlob {
    pub model: SoftmaxClassifier,
    pub labels: Vec<String>,
    pub train_config: Option<TrainConfig>,
}

pub fn write_model(
    mut w: impl Write,
    model: &SoftmaxClassifier,
    labels: &[String],
    cfg: Option<&TrainConfig>,
) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        feature_spec: model.spec.clone(),
        hidden: model.hidden,
        classes: model.classes,
        labels: labels.to_vec(),
        train_config: cfg.cloned(),
    })?;
    let io = |e| Error::ModelFormat(format!("write: {e}"));
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    w.write_all(&(model.params.len() as u64).to_le_bytes()).map_err(io)?;
    for p in &model.params {
        w.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_model(mut r: impl Read) -> Result<ModelBlob> {
    let io = |e: std::io::Error| Error::ModelFormat(format!("read: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word).map_err(io)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut header).map_err(io)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut count = [0u8; 8];
    r.read_exact(&mut count).map_err(io)?;
    let n = u64::from_le_bytes(count) as usize;
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw).map_err(io)?;
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let model = SoftmaxClassifier::from_parts(header.feature_spec, header.hidden, header.classes, params)?;
    Ok(ModelBlob { model, labels: header.labels, train_config: header.train_config })
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &SoftmaxClassifier,
    labels: &[String],
    cfg: Option<&TrainConfig>,
) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(BufWriter::new(f), model, labels, cfg)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBlob> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(f))
}
