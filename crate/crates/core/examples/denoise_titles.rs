//! Word dropping on a few titles, then a full relabel/remove pass.

use idnlab::classifier::{train, FeatureSpec, TrainConfig};
use idnlab::corpus::stratified_split;
use idnlab::denoise::{denoise_with_manifest, drop_words, Action, DEFAULT_THRESHOLD};
use idnlab::noise::{last_epoch_idn, NoiseMethod, NoiseSpec};
use idnlab::synth::{generate, SynthConfig};

fn main() -> idnlab::Result<()> {
    for title in [
        "usb cable",
        "Apple iPhone 12 Pro Max 256GB Pacific Blue Unlocked",
        "stainless steel insulated water bottle with straw lid 32 oz leak proof bpa free for sports gym hiking",
    ] {
        println!("{title:?}\n  -> {:?}", drop_words(title));
    }

    let corpus = generate(&SynthConfig { items: 2_000, sku: false, ..SynthConfig::default() })?.corpus;
    let split = stratified_split(&corpus, 0.2, 2)?;
    let cfg = TrainConfig { features: FeatureSpec { ngram_orders: vec![1], dim: 1 << 12 }, ..TrainConfig::default() };
    let clean = train(&split, &cfg)?;
    let noisy = last_epoch_idn(&split, &clean.model, &NoiseSpec::new(NoiseMethod::LastEpoch, 0.2, 2))?;
    let base = train(&noisy.corpus, &cfg)?;

    let out = denoise_with_manifest(&noisy.corpus, &base.model, DEFAULT_THRESHOLD, &noisy.manifest())?;
    let r = &out.report;
    println!("relabeled {} removed {} unchanged {}", r.relabeled, r.removed, r.kept_unchanged);
    println!(
        "noise reduction {:.1}%  data reduction {:.1}%",
        100.0 * r.noise_reduction.unwrap_or(0.0),
        100.0 * r.data_reduction
    );
    if let Some(e) = out.audit.iter().find(|e| e.action == Action::Relabel) {
        println!("example relabel: id {} -> {} (P_o {:.2}, P_d {:.2})", e.id, e.l_o, e.p_o, e.p_d);
    }
    Ok(())
}
