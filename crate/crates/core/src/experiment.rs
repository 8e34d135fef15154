//! Config-driven experiment runner.
//!
//! One experiment loads a corpus, filters rare labels, splits it, optionally
//! injects noise and denoises, trains one model and scores it against the
//! true test labels. Every artifact lands in the run directory, together with
//! a manifest recording the full config, its hash, and which stages read true
//! labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{self, save_model, FeatureSpec, SoftmaxClassifier, TrainConfig, TrainOutcome};
use crate::corpus::{filter_rare_labels, load_corpus, stratified_split, write_snapshot, Corpus, TextFormat};
use crate::denoise::{self, denoise_with_manifest, DenoiseReport};
use crate::error::{Error, Result};
use crate::eval::{self, build_result_table, write_report_csv, EvalReport, ResultTable, RunRecord};
use crate::features::{fit_tfidf_on_train, EmbeddingTable};
use crate::noise::{self, FlipManifest, NoiseMethod, NoiseResult, NoiseSpec};
use crate::rng;
use crate::robust_train::{self, CtpConfig, PlcConfig, SealConfig, TrainerKind};
use crate::synth::{self, SynthConfig};

/// Value of `dataset` that selects the built-in generator.
pub const SYNTHETIC: &str = "synthetic";

/// Value of `trainer` meaning "denoise, then train the base classifier".
pub const DENOISE_THEN_BASE: &str = "den";

/// Flat experiment description; every key has a default except `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset name used in reports; defaults to the file stem.
    pub name: Option<String>,
    /// Path to a CSV/TSV file, or `synthetic`.
    pub dataset: String,
    /// `csv` or `tsv`.
    pub format: String,
    pub title_column: String,
    pub label_column: String,
    pub id_column: Option<String>,
    pub min_count: usize,
    pub test_fraction: f64,
    pub seed: Option<u64>,

    /// `none` or a noise method name.
    pub noise_method: String,
    pub noise_rate: f64,
    /// Optional JSONL embeddings for similarity noise.
    pub embeddings: Option<String>,
    pub similarity_exact_limit: usize,
    pub similarity_cap: usize,
    pub noise_model_count: usize,

    pub denoise: bool,
    pub denoise_threshold: f64,

    /// `base`, `seal`, `plc`, `coteaching_plus`, or `den`.
    pub trainer: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gradient_clip_norm: f64,
    pub hidden_size: usize,
    pub feature_dim: usize,
    pub ngram_orders: Vec<usize>,

    pub seal_iterations: usize,
    pub plc_warmup_epochs: usize,
    pub plc_threshold: f64,
    pub plc_threshold_step: f64,
    pub plc_threshold_floor: f64,
    /// Defaults to `noise_rate` when noise is injected.
    pub ctp_noise_rate: Option<f64>,
    pub ctp_ramp_epochs: usize,
    pub ctp_init_epochs: usize,

    pub synth_items: usize,
    pub synth_classes: usize,
    pub synth_vocab: usize,
    pub synth_min_words: usize,
    pub synth_max_words: usize,
    pub synth_max_ambiguity: f64,
    pub synth_ambiguity_power: f64,
    pub synth_confusers: usize,
    pub synth_sku: bool,
    pub synth_size_decay: f64,
    /// Generator seed; the experiment seed when absent.
    pub synth_seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let synth = SynthConfig::default();
        let plc = PlcConfig::default();
        let ctp = CtpConfig::default();
        let noise = noise::NoiseParams::default();
        ExperimentConfig {
            name: None,
            dataset: SYNTHETIC.into(),
            format: "csv".into(),
            title_column: "title".into(),
            label_column: "label".into(),
            id_column: Some("id".into()),
            min_count: 1,
            test_fraction: 0.2,
            seed: None,
            noise_method: "none".into(),
            noise_rate: 0.0,
            embeddings: None,
            similarity_exact_limit: noise.exact_limit,
            similarity_cap: noise.similarity_cap,
            noise_model_count: noise.model_count,
            denoise: false,
            denoise_threshold: denoise::DEFAULT_THRESHOLD,
            trainer: "base".into(),
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            gradient_clip_norm: train.gradient_clip_norm,
            hidden_size: train.hidden_size,
            feature_dim: train.features.dim,
            ngram_orders: train.features.ngram_orders,
            seal_iterations: SealConfig::default().iterations,
            plc_warmup_epochs: plc.warmup_epochs,
            plc_threshold: plc.correction_threshold,
            plc_threshold_step: plc.threshold_step,
            plc_threshold_floor: plc.threshold_floor,
            ctp_noise_rate: None,
            ctp_ramp_epochs: ctp.ramp_epochs,
            ctp_init_epochs: ctp.init_epochs,
            synth_items: synth.items,
            synth_classes: synth.classes,
            synth_vocab: synth.vocab_per_class,
            synth_min_words: synth.min_words,
            synth_max_words: synth.max_words,
            synth_max_ambiguity: synth.max_ambiguity,
            synth_ambiguity_power: synth.ambiguity_power,
            synth_confusers: synth.confusers,
            synth_sku: synth.sku,
            synth_size_decay: synth.size_decay,
            synth_seed: None,
        }
    }
}

/// A validated config with typed choices.
#[derive(Debug, Clone)]
pub struct Plan {
    pub seed: u64,
    pub noise: Option<NoiseSpec>,
    pub denoise: bool,
    pub trainer: TrainerKind,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, resolving relative data paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut String| {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(&*p).to_string_lossy().into_owned();
            }
        };
        if self.dataset != SYNTHETIC {
            resolve(&mut self.dataset);
        }
        if let Some(e) = &mut self.embeddings {
            resolve(e);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Stable hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:016x}", rng::fnv1a(&json))
    }

    pub fn dataset_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            if self.dataset == SYNTHETIC {
                SYNTHETIC.to_string()
            } else {
                Path::new(&self.dataset)
                    .file_stem()
                    .map_or_else(|| self.dataset.clone(), |s| s.to_string_lossy().into_owned())
            }
        })
    }

    pub fn text_format(&self) -> Result<TextFormat> {
        let delimiter = match self.format.as_str() {
            "csv" => b',',
            "tsv" => b'\t',
            other => return Err(Error::Config(format!("unknown format {other:?}"))),
        };
        Ok(TextFormat {
            delimiter,
            title_column: self.title_column.clone(),
            label_column: self.label_column.clone(),
            id_column: self.id_column.clone(),
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            gradient_clip_norm: self.gradient_clip_norm,
            hidden_size: self.hidden_size,
            features: FeatureSpec { ngram_orders: self.ngram_orders.clone(), dim: self.feature_dim },
            seed,
        }
    }

    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            classes: self.synth_classes,
            items: self.synth_items,
            vocab_per_class: self.synth_vocab,
            min_words: self.synth_min_words,
            max_words: self.synth_max_words,
            max_ambiguity: self.synth_max_ambiguity,
            ambiguity_power: self.synth_ambiguity_power,
            confusers: self.synth_confusers,
            sku: self.synth_sku,
            size_decay: self.synth_size_decay,
            seed: self.synth_seed.unwrap_or(seed),
            ..SynthConfig::default()
        }
    }

    pub fn plan(&self) -> Result<Plan> {
        let seed = self.seed.ok_or_else(|| Error::Config("seed must be set".into()))?;
        if self.dataset != SYNTHETIC && !Path::new(&self.dataset).is_file() {
            return Err(Error::Config(format!("dataset {} does not exist", self.dataset)));
        }
        if let Some(e) = &self.embeddings {
            if !Path::new(e).is_file() {
                return Err(Error::Config(format!("embeddings {e} do not exist")));
            }
        }
        self.text_format()?;
        let noise = match self.noise_method.as_str() {
            "none" => None,
            m => {
                let method: NoiseMethod = m.parse()?;
                if !(self.noise_rate > 0.0 && self.noise_rate < 1.0) {
                    return Err(Error::Config(format!("noise_rate must be in (0, 1), got {}", self.noise_rate)));
                }
                let mut spec = NoiseSpec::new(method, self.noise_rate, seed);
                spec.params.exact_limit = self.similarity_exact_limit;
                spec.params.similarity_cap = self.similarity_cap;
                spec.params.model_count = self.noise_model_count;
                Some(spec)
            }
        };
        let (trainer, denoise) = if self.trainer == DENOISE_THEN_BASE {
            (TrainerKind::Base, true)
        } else {
            (self.trainer.parse()?, self.denoise)
        };
        let train = self.train_config(seed);
        train.validate()?;
        Ok(Plan { seed, noise, denoise, trainer, train })
    }

    /// Trainer key used in reports and result tables.
    pub fn trainer_key(&self) -> String {
        match (self.trainer.as_str(), self.denoise) {
            (DENOISE_THEN_BASE, _) | ("base", true) => DENOISE_THEN_BASE.to_string(),
            (t, true) => format!("{DENOISE_THEN_BASE}+{t}"),
            (t, false) => t.to_string(),
        }
    }

    pub fn method_key(&self) -> String {
        self.noise_method.clone()
    }

    pub fn effective_rate(&self) -> f64 {
        if self.noise_method == "none" {
            0.0
        } else {
            self.noise_rate
        }
    }
}

/// Stages that read true labels, in the order they ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthAudit {
    pub stages: Vec<String>,
}

impl TruthAudit {
    fn record(&mut self, stage: &str) {
        if !self.stages.iter().any(|s| s == stage) {
            self.stages.push(stage.to_string());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub truth_access: TruthAudit,
    pub artifacts: Vec<String>,
    pub train_items: usize,
    pub test_items: usize,
    pub labels: Vec<String>,
    pub achieved_noise_rate: Option<f64>,
    pub denoise: Option<DenoiseReport>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub report: EvalReport,
    pub manifest: RunManifest,
}

/// Clean split corpus plus noisy data, shared by runs that differ only in
/// trainer or denoising.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: Corpus,
    pub noise: Option<NoiseResult>,
}

impl PreparedData {
    pub fn noisy(&self) -> &Corpus {
        self.noise.as_ref().map_or(&self.split, |n| &n.corpus)
    }
}

pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Corpus> {
    if cfg.dataset == SYNTHETIC {
        Ok(synth::generate(&cfg.synth_config(seed))?.corpus)
    } else {
        load_corpus(&cfg.dataset, &cfg.text_format()?)
    }
}

/// Load, filter and split.
pub fn ingest(cfg: &ExperimentConfig) -> Result<Corpus> {
    let plan = cfg.plan().map_err(|e| e.in_stage("config"))?;
    let raw = load_dataset(cfg, plan.seed).map_err(|e| e.in_stage("load"))?;
    let filtered = filter_rare_labels(&raw, cfg.min_count).map_err(|e| e.in_stage("filter"))?;
    stratified_split(&filtered, cfg.test_fraction, plan.seed).map_err(|e| e.in_stage("split"))
}

/// Injects noise into a clean split, training whatever clean models the
/// method needs.
pub fn inject(cfg: &ExperimentConfig, split: &Corpus, spec: &NoiseSpec) -> Result<NoiseResult> {
    let train_cfg = cfg.train_config(spec.seed);
    let clean = |c: &Corpus| -> Result<TrainOutcome> { classifier::train(c, &train_cfg) };
    match spec.method {
        NoiseMethod::LastEpoch => noise::last_epoch_idn(split, &clean(split)?.model, spec),
        NoiseMethod::MultiEpoch => noise::multi_epoch_idn(split, &clean(split)?.checkpoints, spec),
        NoiseMethod::MultiModel => noise::multi_model_idn(split, &train_cfg, spec),
        NoiseMethod::Similarity => {
            let tfidf = fit_tfidf_on_train(split)?;
            let emb = cfg.embeddings.as_ref().map(EmbeddingTable::load).transpose()?;
            noise::similarity_idn(split, &tfidf, emb.as_ref(), spec)
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let plan = cfg.plan().map_err(|e| e.in_stage("config"))?;
    let split = ingest(cfg)?;
    let noise = plan
        .noise
        .as_ref()
        .map(|spec| inject(cfg, &split, spec))
        .transpose()
        .map_err(|e| e.in_stage("noise"))?;
    if let Some(n) = &noise {
        n.corpus.check_test_clean().map_err(|e| e.in_stage("noise"))?;
    }
    Ok(PreparedData { split, noise })
}

/// Trains the configured model on `c`, writing trainer logs and `model.bin`
/// under `dir`. Returns the model and the artifact names written.
pub fn train_to_dir(cfg: &ExperimentConfig, c: &Corpus, dir: &Path) -> Result<(SoftmaxClassifier, Vec<String>)> {
    let plan = cfg.plan().map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut artifacts = Vec::new();
    let model = train_with(&plan, cfg, c, dir, &mut artifacts)?;
    save_model(dir.join("model.bin"), &model, &c.labels, Some(&plan.train))?;
    artifacts.push("model.bin".into());
    Ok((model, artifacts))
}

fn train_with(plan: &Plan, cfg: &ExperimentConfig, c: &Corpus, dir: &Path, artifacts: &mut Vec<String>) -> Result<SoftmaxClassifier> {
    let mut write = |name: &str| {
        artifacts.push(name.to_string());
        dir.join(name)
    };
    match plan.trainer {
        TrainerKind::Base => {
            let out = classifier::train(c, &plan.train)?;
            robust_train::write_train_log(write("train_log.jsonl"), &out.log)?;
            Ok(out.model)
        }
        TrainerKind::Seal => {
            let out = robust_train::train_seal(c, &SealConfig { iterations: cfg.seal_iterations, inner: plan.train.clone() })?;
            for (i, log) in out.logs.iter().enumerate() {
                robust_train::write_train_log(write(&format!("train_log_iter{i}.jsonl")), log)?;
            }
            crate::jsonl::write(write("seal_reports.jsonl"), &out.reports)?;
            Ok(out.model)
        }
        TrainerKind::Plc => {
            let plc = PlcConfig {
                warmup_epochs: cfg.plc_warmup_epochs,
                correction_threshold: cfg.plc_threshold,
                threshold_step: cfg.plc_threshold_step,
                threshold_floor: cfg.plc_threshold_floor,
                inner: plan.train.clone(),
            };
            let out = robust_train::train_plc(c, &plc)?;
            robust_train::write_train_log(write("train_log.jsonl"), &out.log)?;
            robust_train::write_corrections(write("corrections.jsonl"), &out.corrections)?;
            Ok(out.model)
        }
        TrainerKind::CoteachingPlus => {
            let rate = cfg.ctp_noise_rate.unwrap_or_else(|| plan.noise.as_ref().map_or(0.0, |n| n.rate));
            let ctp = CtpConfig {
                estimated_noise_rate: rate,
                ramp_epochs: cfg.ctp_ramp_epochs,
                init_epochs: cfg.ctp_init_epochs,
                peer_seed: None,
                inner: plan.train.clone(),
            };
            let out = robust_train::train_coteaching_plus(c, &ctp)?;
            robust_train::write_train_log(write("train_log.jsonl"), &out.logs[0])?;
            robust_train::write_train_log(write("train_log_peer.jsonl"), &out.logs[1])?;
            robust_train::write_selections(write("selections.jsonl"), &out.selections)?;
            Ok(out.model)
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, out: impl AsRef<Path>) -> Result<RunSummary> {
    let data = prepare(cfg)?;
    run_prepared(cfg, &data, None, out)
}

/// Runs the stages after noise injection. `noisy_base` may hold a base model
/// already trained on the noisy data, reused for denoising.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    noisy_base: Option<&SoftmaxClassifier>,
    out: impl AsRef<Path>,
) -> Result<RunSummary> {
    let dir = out.as_ref().to_path_buf();
    let plan = cfg.plan().map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e).in_stage("output"))?;
    let mut artifacts = Vec::new();
    let mut audit = TruthAudit::default();
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);

    let noisy = data.noisy();
    write_snapshot(noisy, dir.join("corpus.jsonl")).map_err(stage("snapshot"))?;
    artifacts.extend(["corpus.jsonl".to_string(), "corpus.labels.json".to_string()]);
    let manifest = data.noise.as_ref().map(NoiseResult::manifest);
    if let Some(m) = &manifest {
        audit.record("noise");
        m.write(dir.join("flips.jsonl")).map_err(stage("noise"))?;
        artifacts.push("flips.jsonl".into());
    }

    let mut train_corpus = noisy.clone();
    let mut denoise_report = None;
    if plan.denoise {
        let owned;
        let model = match noisy_base {
            Some(m) => m,
            None => {
                owned = classifier::train(noisy, &plan.train).map_err(stage("denoise"))?.model;
                &owned
            }
        };
        let outcome = match &manifest {
            Some(m) => {
                audit.record("denoise_report");
                denoise_with_manifest(noisy, model, cfg.denoise_threshold, m)
            }
            None => denoise::denoise(noisy, model, cfg.denoise_threshold),
        }
        .map_err(stage("denoise"))?;
        denoise::write_audit(dir.join("denoise_audit.jsonl"), &outcome.audit).map_err(stage("denoise"))?;
        artifacts.push("denoise_audit.jsonl".into());
        train_corpus = outcome.corpus;
        denoise_report = Some(outcome.report);
    }

    let model = train_with(&plan, cfg, &train_corpus, &dir, &mut artifacts).map_err(stage("train"))?;
    save_model(dir.join("model.bin"), &model, &train_corpus.labels, Some(&plan.train)).map_err(stage("train"))?;
    artifacts.push("model.bin".into());

    audit.record("eval");
    let report = eval::evaluate(&model, &data.split)
        .map_err(stage("eval"))?
        .with_fingerprint(cfg.hash());
    let record = RunRecord {
        dataset: cfg.dataset_name(),
        method: cfg.method_key(),
        rate: cfg.effective_rate(),
        trainer: cfg.trainer_key(),
        macro_f1: report.macro_f1,
        seed: plan.seed,
    };
    write_report_csv(dir.join("report.csv"), std::slice::from_ref(&record)).map_err(stage("eval"))?;
    write_json(&dir.join("eval.json"), &report).map_err(stage("eval"))?;
    artifacts.extend(["report.csv".to_string(), "eval.json".to_string()]);

    let manifest = RunManifest {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seed: plan.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        truth_access: audit,
        artifacts,
        train_items: train_corpus.train_len(),
        test_items: data.split.test().count(),
        labels: data.split.labels.clone(),
        achieved_noise_rate: data.noise.as_ref().map(|n| n.achieved_rate),
        denoise: denoise_report,
    };
    write_json(&dir.join("manifest.json"), &manifest).map_err(stage("manifest"))?;
    Ok(RunSummary { dir, record, report, manifest })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A grid of experiments: a base config, axes whose cartesian product forms
/// cells, and optional explicit cells. Axis and cell values override keys of
/// the base config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub base: toml::Table,
    pub axes: BTreeMap<String, Vec<toml::Value>>,
    pub cells: Vec<toml::Table>,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<SuiteConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SuiteConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut suite = SuiteConfig::from_toml(&text)?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        for key in ["dataset", "embeddings"] {
            if let Some(toml::Value::String(p)) = suite.base.get_mut(key) {
                if p != SYNTHETIC && Path::new(p.as_str()).is_relative() {
                    *p = base_dir.join(&*p).to_string_lossy().into_owned();
                }
            }
        }
        Ok(suite)
    }

    /// Override tables, one per cell: the axes product (if any axes) followed
    /// by the explicit cells.
    pub fn overrides(&self) -> Vec<toml::Table> {
        let mut out = Vec::new();
        if !self.axes.is_empty() {
            let mut acc = vec![toml::Table::new()];
            for (key, values) in &self.axes {
                acc = acc
                    .into_iter()
                    .flat_map(|t| {
                        values.iter().map(move |v| {
                            let mut t = t.clone();
                            t.insert(key.clone(), v.clone());
                            t
                        })
                    })
                    .collect();
            }
            out.extend(acc);
        }
        out.extend(self.cells.iter().cloned());
        if out.is_empty() {
            out.push(toml::Table::new());
        }
        out
    }

    /// Full configs for every cell, with derived seeds.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let master = match self.base.get("seed") {
            Some(toml::Value::Integer(s)) => *s as u64,
            Some(_) => return Err(Error::Config("seed must be an integer".into())),
            None => return Err(Error::Config("suite base must set seed".into())),
        };
        self.overrides()
            .into_iter()
            .map(|o| {
                let mut t = self.base.clone();
                let explicit_seed = o.get("seed").is_some();
                t.extend(o);
                let mut cfg: ExperimentConfig =
                    toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
                if !explicit_seed {
                    cfg.seed = Some(cell_seed(master, &cfg));
                }
                Ok(cfg)
            })
            .collect()
    }
}

/// Seed derived from the master seed and the data coordinates of a cell.
pub fn cell_seed(master: u64, cfg: &ExperimentConfig) -> u64 {
    let coords = format!(
        "{}\u{1f}{}\u{1f}{}",
        cfg.dataset_name(),
        cfg.noise_method,
        if cfg.noise_method == "none" { 0.0 } else { cfg.noise_rate }
    );
    rng::key(&[master, rng::fnv1a(coords.as_bytes())])
}

fn cell_dir_name(cfg: &ExperimentConfig) -> String {
    let raw = format!("{}__{}__{}__{}", cfg.dataset_name(), cfg.method_key(), cfg.effective_rate(), cfg.trainer_key());
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub records: Vec<RunRecord>,
    pub table: ResultTable,
    pub failures: Vec<CellFailure>,
}

/// Cache key: everything that affects the prepared data.
fn data_key(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.trainer = String::new();
    c.denoise = false;
    c.denoise_threshold = 0.0;
    c.seal_iterations = 0;
    c.plc_warmup_epochs = 0;
    c.plc_threshold = 0.0;
    c.plc_threshold_step = 0.0;
    c.plc_threshold_floor = 0.0;
    c.ctp_noise_rate = None;
    c.ctp_ramp_epochs = 0;
    c.ctp_init_epochs = 0;
    c.hash()
}

/// Runs every cell, writing each into its own directory under `out`, then
/// assembles the report, result table and API summary.
pub fn run_suite(suite: &SuiteConfig, out: impl AsRef<Path>) -> Result<SuiteOutcome> {
    let out = out.as_ref();
    let cells = suite.expand()?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut cache: BTreeMap<String, (PreparedData, Option<SoftmaxClassifier>)> = BTreeMap::new();
    for cfg in &cells {
        let name = cell_dir_name(cfg);
        let result = (|| -> Result<RunSummary> {
            let key = data_key(cfg);
            if !cache.contains_key(&key) {
                cache.insert(key.clone(), (prepare(cfg)?, None));
            }
            let plan = cfg.plan().map_err(|e| e.in_stage("config"))?;
            let (data, base) = cache.get_mut(&key).expect("just inserted");
            if plan.denoise && base.is_none() {
                *base = Some(classifier::train(data.noisy(), &plan.train).map_err(|e| e.in_stage("denoise"))?.model);
            }
            run_prepared(cfg, data, base.as_ref(), out.join("cells").join(&name))
        })();
        match result {
            Ok(summary) => records.push(summary.record),
            Err(e) => failures.push(CellFailure { cell: name, error: e.to_string() }),
        }
    }
    let table = build_result_table(&records)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_report_csv(out.join("report.csv"), &records)?;
    fs::write(out.join("table.csv"), table.to_csv()?).map_err(|e| Error::io(out, e))?;
    fs::write(out.join("table.txt"), table.to_text()).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("api.json"), &api_json(&table))?;
    write_json(&out.join("failures.json"), &failures)?;
    Ok(SuiteOutcome { records, table, failures })
}

#[derive(Debug, Serialize)]
struct ApiEntry<'a> {
    method: &'a str,
    rate: f64,
    trainer: &'a str,
    api: f64,
    pairs: &'a [(String, f64, f64)],
}

fn api_json(table: &ResultTable) -> Vec<ApiEntry<'_>> {
    table
        .blocks
        .iter()
        .flat_map(|b| {
            b.api.iter().zip(&table.trainers).filter_map(move |(a, t)| {
                a.as_ref().map(|a| ApiEntry { method: &b.method, rate: b.rate, trainer: t, api: a.api, pairs: &a.pairs })
            })
        })
        .collect()
}

/// Reads one or more report CSVs and builds the combined result table.
pub fn report(paths: &[PathBuf]) -> Result<ResultTable> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(eval::read_report_csv(p)?);
    }
    build_result_table(&records)
}

/// Reads a flip manifest if one is given.
pub fn read_manifest(path: Option<&Path>) -> Result<Option<FlipManifest>> {
    path.map(FlipManifest::read).transpose()
}
