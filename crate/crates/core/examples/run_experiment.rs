//! One experiment from a TOML config, with its manifest.

use idnlab::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
seed = 7
synth_items = 1500
synth_sku = false
noise_method = "multi_epoch"
noise_rate = 0.3
trainer = "den"
ngram_orders = [1]
feature_dim = 4096
"#;

fn main() -> idnlab::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let s = run_experiment(&cfg, dir.path())?;
    println!("{} {} {} -> macro-F1 {:.4}", s.record.method, s.record.rate, s.record.trainer, s.report.macro_f1);
    println!("config hash {}", s.manifest.config_hash);
    println!("stages that read true labels: {:?}", s.manifest.truth_access.stages);
    println!("artifacts: {}", s.manifest.artifacts.join(", "));
    Ok(())
}
