//! Train the base classifier, score it, and round-trip it through a file.

use idnlab::classifier::{load_model, save_model, train, FeatureSpec, TrainConfig};
use idnlab::corpus::stratified_split;
use idnlab::eval::evaluate;
use idnlab::synth::{generate, SynthConfig};

fn main() -> idnlab::Result<()> {
    let corpus = generate(&SynthConfig { items: 2_000, sku: false, ..SynthConfig::default() })?.corpus;
    let split = stratified_split(&corpus, 0.2, 0)?;
    let cfg = TrainConfig { features: FeatureSpec { ngram_orders: vec![1], dim: 1 << 12 }, ..TrainConfig::default() };

    let out = train(&split, &cfg)?;
    for e in &out.log.epochs {
        println!("epoch {:>2}  loss {:.4}", e.epoch, e.mean_loss);
    }
    let report = evaluate(&out.model, &split)?;
    println!("test macro-F1 {:.4}", report.macro_f1);

    let first = &split.test().next().expect("test item").title;
    let p = out.model.predict(first);
    println!("{first:?} -> {} ({:.2})", split.labels[p.top1], p.confidence);

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("model.bin");
    save_model(&path, &out.model, &split.labels, Some(&cfg))?;
    let blob = load_model(&path)?;
    assert_eq!(blob.model, out.model);
    println!("saved and reloaded {} bytes", std::fs::metadata(&path).expect("model file").len());
    Ok(())
}
