//! Calibrate per-bucket range multipliers on held-out predictions and check
//! the outside-range rate on a fresh sample.
//!
//! Run with `cargo run --release --example calibrate_thresholds`.

use jam_age::calibration::{calibrate, write_table, CalibrationSettings, LabeledPrediction};
use jam_age::data::{generate, Dataset, GenConfig};
use jam_age::loss::LossConfig;
use jam_age::metrics::{comparability_stats, ranges_for};
use jam_age::model::{train, Model, ModelSpec, TrainConfig};

fn labeled(model: &Model, data: &Dataset) -> jam_age::Result<Vec<LabeledPrediction>> {
    let out = model.predict(data)?;
    Ok(data
        .ages()
        .into_iter()
        .enumerate()
        .map(|(i, truth)| LabeledPrediction {
            mu: out.mu[i],
            sigma: out.sigma[i],
            truth,
        })
        .collect())
}

pub fn run_example() -> jam_age::Result<()> {
    let gen = |n, seed| {
        generate(&GenConfig {
            n,
            seed,
            ..Default::default()
        })
    };
    let (model, _) = train(
        &gen(4000, 1)?,
        &ModelSpec::default(),
        &LossConfig::default(),
        &TrainConfig {
            epochs: 10,
            ..Default::default()
        },
    )?;

    let settings = CalibrationSettings {
        target_fpr: 0.05,
        ..Default::default()
    };
    let table = calibrate(&labeled(&model, &gen(20_000, 2)?)?, &settings)?;
    println!(
        "fallback lt {:.3}  ut {:.3}",
        table.fallback_lt, table.fallback_ut
    );
    for b in table.buckets.iter().filter(|b| b.n > 0).step_by(3) {
        println!(
            "[{:>3}, {:>3})  n {:>5}  lt {:.3}  ut {:.3}",
            b.lo, b.hi, b.n, b.lt, b.ut
        );
    }

    let test = labeled(&model, &gen(20_000, 3)?)?;
    let truths: Vec<f64> = test.iter().map(|p| p.truth).collect();
    let stats = comparability_stats(&ranges_for(&test, &table)?, &truths)?;
    println!(
        "target outside-range rate {:.3}, observed {:.4}, median width {:.1} years",
        settings.target_fpr, stats.empirical_fpr, stats.median_width
    );
    println!("table file is {} bytes", write_table(&table)?.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("calibration example failed");
}
