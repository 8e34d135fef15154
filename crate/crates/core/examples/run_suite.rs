//! A small grid of experiments driven by a suite config.

use idnlab::experiment::{run_suite, SuiteConfig};

const SUITE: &str = r#"
[base]
seed = 42
name = "synthetic"
synth_items = 1500
synth_sku = false
ngram_orders = [1]
feature_dim = 4096

[axes]
noise_method = ["last_epoch", "similarity"]
noise_rate = [0.2, 0.4]
trainer = ["base", "den", "seal", "plc", "coteaching_plus"]
"#;

fn main() -> idnlab::Result<()> {
    let suite = SuiteConfig::from_toml(SUITE)?;
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("idnlab-suite"), Into::into);
    let outcome = run_suite(&suite, &out)?;
    print!("{}", outcome.table.to_text());
    println!("{} runs, {} failures, artifacts in {}", outcome.records.len(), outcome.failures.len(), out.display());
    Ok(())
}
