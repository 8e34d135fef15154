use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use idnlab::classifier::load_model;
use idnlab::corpus::{kl_skewness, read_snapshot, write_snapshot, Corpus, Split};
use idnlab::denoise;
use idnlab::error::{Error, Result};
use idnlab::eval;
use idnlab::experiment::{self, ExperimentConfig, SuiteConfig};

#[derive(Parser)]
#[command(name = "idnlab", version, about = "Label-noise experiments on product titles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter and split a dataset into a corpus snapshot.
    Ingest(Common),
    /// Inject noise into the clean split described by the config.
    InjectNoise(Common),
    /// Train the base classifier on a snapshot.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Denoise a snapshot with a trained model.
    Denoise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Flip manifest, used only for the noise-reduction report.
        #[arg(long)]
        flips: Option<PathBuf>,
    },
    /// Train with the robust trainer named in the config.
    TrainRobust {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Score a model on the test split of a snapshot.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run one full experiment.
    Run(Common),
    /// Run every cell of a suite config.
    Suite(Common),
    /// Build the result table from report CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })
}

fn snapshot(path: &Path) -> Result<Corpus> {
    read_snapshot(path).map_err(|e| e.in_stage("load"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(common) => {
            let cfg = experiment_config(&common)?;
            let c = experiment::ingest(&cfg)?;
            create_out(&common.out)?;
            write_snapshot(&c, common.out.join("corpus.jsonl"))?;
            let skew = kl_skewness(&c, Split::Train)?;
            println!("{} items, {} classes, train KL skewness {:.4}", c.items.len(), c.num_classes(), skew.kl_divergence);
        }
        Command::InjectNoise(common) => {
            let cfg = experiment_config(&common)?;
            let data = experiment::prepare(&cfg)?;
            let noise = data.noise.as_ref().ok_or_else(|| Error::Config("noise_method is none".into()))?;
            create_out(&common.out)?;
            write_snapshot(&noise.corpus, common.out.join("corpus.jsonl"))?;
            noise.manifest().write(common.out.join("flips.jsonl"))?;
            println!("{} flips, achieved rate {:.4}", noise.flips.len(), noise.achieved_rate);
        }
        Command::Train { common, corpus } => {
            let mut cfg = experiment_config(&common)?;
            cfg.trainer = "base".into();
            let c = snapshot(&corpus)?;
            experiment::train_to_dir(&cfg, &c, &common.out).map_err(|e| e.in_stage("train"))?;
            println!("wrote {}", common.out.join("model.bin").display());
        }
        Command::TrainRobust { common, corpus } => {
            let cfg = experiment_config(&common)?;
            let c = snapshot(&corpus)?;
            experiment::train_to_dir(&cfg, &c, &common.out).map_err(|e| e.in_stage("train"))?;
            println!("wrote {}", common.out.join("model.bin").display());
        }
        Command::Denoise { common, corpus, model, flips } => {
            let cfg = experiment_config(&common)?;
            let c = snapshot(&corpus)?;
            let blob = load_model(&model).map_err(|e| e.in_stage("load"))?;
            if blob.labels != c.labels {
                return Err(Error::LabelSpaceMismatch { expected: blob.labels.len(), found: c.labels.len() }.in_stage("denoise"));
            }
            let outcome = match experiment::read_manifest(flips.as_deref())? {
                Some(m) => denoise::denoise_with_manifest(&c, &blob.model, cfg.denoise_threshold, &m),
                None => denoise::denoise(&c, &blob.model, cfg.denoise_threshold),
            }
            .map_err(|e| e.in_stage("denoise"))?;
            create_out(&common.out)?;
            write_snapshot(&outcome.corpus, common.out.join("corpus.jsonl"))?;
            denoise::write_audit(common.out.join("denoise_audit.jsonl"), &outcome.audit)?;
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
        }
        Command::Eval { common, corpus, model } => {
            let c = snapshot(&corpus)?;
            let blob = load_model(&model).map_err(|e| e.in_stage("load"))?;
            if blob.labels != c.labels {
                return Err(Error::LabelSpaceMismatch { expected: blob.labels.len(), found: c.labels.len() }.in_stage("eval"));
            }
            let report = eval::evaluate(&blob.model, &c).map_err(|e| e.in_stage("eval"))?;
            create_out(&common.out)?;
            std::fs::write(common.out.join("eval.json"), serde_json::to_vec_pretty(&report)?)
                .map_err(|e| Error::Io { path: common.out.join("eval.json"), source: e })?;
            println!("macro-F1 {:.4}", report.macro_f1);
        }
        Command::Run(common) => {
            let cfg = experiment_config(&common)?;
            let summary = experiment::run_experiment(&cfg, &common.out)?;
            println!("macro-F1 {:.4} -> {}", summary.report.macro_f1, summary.dir.display());
        }
        Command::Suite(common) => {
            let path = common.config.as_ref().ok_or_else(|| Error::Config("suite needs --config".into()))?;
            let mut suite = SuiteConfig::load(path)?;
            if let Some(seed) = common.seed {
                suite.base.insert("seed".into(), toml::Value::Integer(seed as i64));
            }
            let outcome = experiment::run_suite(&suite, &common.out)?;
            print!("{}", outcome.table.to_text());
            for f in &outcome.failures {
                eprintln!("cell {} failed: {}", f.cell, f.error);
            }
            if !outcome.failures.is_empty() {
                return Err(Error::Config(format!("{} suite cells failed", outcome.failures.len())).in_stage("suite"));
            }
        }
        Command::Report { common, reports } => {
            let table = experiment::report(&reports).map_err(|e| e.in_stage("report"))?;
            create_out(&common.out)?;
            std::fs::write(common.out.join("table.csv"), table.to_csv()?)
                .map_err(|e| Error::Io { path: common.out.join("table.csv"), source: e })?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
