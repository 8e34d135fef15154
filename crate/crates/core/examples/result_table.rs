//! Macro-F1, API and the grouped result table from run records.

use idnlab::eval::{build_result_table, macro_f1, recompute_api, RunRecord};

fn main() -> idnlab::Result<()> {
    let gold = [0, 0, 1, 1, 2, 2];
    let pred = [0, 1, 1, 1, 2, 0];
    let r = macro_f1(&pred, &gold, 3)?;
    println!("per-class F1 {:?}  macro {:.4}", r.per_class_f1, r.macro_f1);

    let api = recompute_api(&[0.55, 0.68, 0.59], &[0.67, 0.71, 0.66])?;
    println!("API {api:.1}%");

    let mut runs = Vec::new();
    for (dataset, base) in [("shoes", 0.70), ("toys", 0.62)] {
        for (trainer, gain) in [("base", 0.0), ("den", 0.03), ("seal", 0.05), ("plc", 0.01), ("coteaching_plus", 0.06)] {
            runs.push(RunRecord {
                dataset: dataset.into(),
                method: "last_epoch".into(),
                rate: 0.4,
                trainer: trainer.into(),
                macro_f1: base + gain,
                seed: 0,
            });
        }
    }
    let table = build_result_table(&runs)?;
    print!("{}", table.to_text());
    print!("{}", table.to_csv()?);
    Ok(())
}
