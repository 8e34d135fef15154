//! Load a CSV of product titles, drop rare labels, split, and report skew.

use idnlab::corpus::{filter_rare_labels, kl_skewness, load_corpus, stratified_split, Split, TextFormat};
use idnlab::synth::{generate, SynthConfig};

fn main() -> idnlab::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("products.csv");

    // Write a small skewed catalogue so the example is self-contained.
    let synth = generate(&SynthConfig { items: 600, size_decay: 0.6, sku: false, ..SynthConfig::default() })?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["id", "title", "label"])?;
    for it in &synth.corpus.items {
        w.write_record([it.id.to_string(), it.title.clone(), synth.corpus.labels[it.true_label].clone()])?;
    }
    w.flush().expect("flush");

    let raw = load_corpus(&path, &TextFormat::default())?;
    let kept = filter_rare_labels(&raw, 40)?;
    let split = stratified_split(&kept, 0.1, 7)?;
    println!("loaded {} items, {} after filtering", raw.items.len(), kept.items.len());
    println!("train {} / test {}", split.train_len(), split.test().count());

    let skew = kl_skewness(&split, Split::Train)?;
    for (label, n) in &skew.per_class_counts {
        println!("  {label:<12} {n}");
    }
    println!("KL to uniform: {:.4} nats", skew.kl_divergence);
    Ok(())
}
