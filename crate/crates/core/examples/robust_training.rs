//! Base training versus SEAL, PLC and CoTeaching+ on noisy labels.

use idnlab::classifier::{train, FeatureSpec, SoftmaxClassifier, TrainConfig};
use idnlab::corpus::stratified_split;
use idnlab::eval::evaluate;
use idnlab::features::fit_tfidf_on_train;
use idnlab::noise::{similarity_idn, NoiseMethod, NoiseSpec};
use idnlab::robust_train::{train_coteaching_plus, train_plc, train_seal, CtpConfig, PlcConfig, SealConfig};
use idnlab::synth::{generate, SynthConfig};

fn main() -> idnlab::Result<()> {
    let corpus = generate(&SynthConfig { items: 2_500, sku: false, ..SynthConfig::default() })?.corpus;
    let split = stratified_split(&corpus, 0.2, 3)?;
    let cfg = TrainConfig { features: FeatureSpec { ngram_orders: vec![1], dim: 1 << 12 }, ..TrainConfig::default() };
    let rate = 0.4;
    let noisy = similarity_idn(&split, &fit_tfidf_on_train(&split)?, None, &NoiseSpec::new(NoiseMethod::Similarity, rate, 3))?;
    let c = &noisy.corpus;

    let score = |m: &SoftmaxClassifier| evaluate(m, c).map(|r| r.macro_f1);
    println!("clean       {:.4}", score(&train(&split, &cfg)?.model)?);
    println!("base        {:.4}", score(&train(c, &cfg)?.model)?);

    let seal = train_seal(c, &SealConfig { inner: cfg.clone(), ..SealConfig::default() })?;
    println!("SEAL        {:.4}", score(&seal.model)?);

    let plc = train_plc(c, &PlcConfig { inner: cfg.clone(), ..PlcConfig::default() })?;
    let right = plc
        .corrections
        .iter()
        .filter(|k| c.items[c.index_by_id()[&k.id]].true_label == c.label_index(&k.new).expect("known label"))
        .count();
    println!("PLC         {:.4}  ({} corrections, {right} to the true label)", score(&plc.model)?, plc.corrections.len());

    let ctp = train_coteaching_plus(c, &CtpConfig { estimated_noise_rate: rate, inner: cfg, ..CtpConfig::default() })?;
    println!("CoTeaching+ {:.4}  ({} selections)", score(&ctp.model)?, ctp.selections.len());
    Ok(())
}
