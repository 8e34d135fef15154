//! Corrupt train labels with each instance-dependent noise simulator.

use idnlab::classifier::{train, FeatureSpec, TrainConfig};
use idnlab::corpus::stratified_split;
use idnlab::features::fit_tfidf_on_train;
use idnlab::noise::{self, measure_noise, NoiseMethod, NoiseSpec};
use idnlab::synth::{generate, SynthConfig};

fn main() -> idnlab::Result<()> {
    let corpus = generate(&SynthConfig { items: 1_500, sku: false, ..SynthConfig::default() })?.corpus;
    let split = stratified_split(&corpus, 0.2, 1)?;
    let cfg = TrainConfig { features: FeatureSpec { ngram_orders: vec![1], dim: 1 << 12 }, ..TrainConfig::default() };
    let clean = train(&split, &cfg)?;
    let tfidf = fit_tfidf_on_train(&split)?;

    for method in NoiseMethod::ALL {
        let spec = NoiseSpec::new(method, 0.3, 1);
        let result = match method {
            NoiseMethod::LastEpoch => noise::last_epoch_idn(&split, &clean.model, &spec)?,
            NoiseMethod::MultiEpoch => noise::multi_epoch_idn(&split, &clean.checkpoints, &spec)?,
            NoiseMethod::MultiModel => noise::multi_model_idn(&split, &cfg, &spec)?,
            NoiseMethod::Similarity => noise::similarity_idn(&split, &tfidf, None, &spec)?,
        };
        let m = measure_noise(&result);
        println!("{method:<12} flips {:>4}  rate {:.4}", result.flips.len(), m.achieved_rate);
        for (k, row) in m.matrix.iter().enumerate() {
            println!("  {:<10} {row:?}", split.labels[k]);
        }
        if let Some(top) = result.manifest().entries.first() {
            println!("  highest score: id {} {} -> {} ({:.3})", top.id, top.true_label, top.noisy, top.score);
        }
    }
    Ok(())
}
