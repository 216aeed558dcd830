//! Check claimed ages against predicted ranges, and compare the range widths
//! of the sigma-aware table with a sigma-blind fixed-width baseline calibrated
//! to the same outside-range rate.
//!
//! Run with `cargo run --release --example age_comparability`.

use jam_age::calibration::{calibrate, CalibrationSettings, LabeledPrediction};
use jam_age::data::{generate, GenConfig};
use jam_age::decision::{compare, fixed_width_baseline};
use jam_age::loss::LossConfig;
use jam_age::metrics::{comparability_stats, ranges_for};
use jam_age::model::{train, ModelSpec, TrainConfig};

pub fn run_example() -> jam_age::Result<()> {
    let gen = |n, seed| {
        generate(&GenConfig {
            n,
            seed,
            ..Default::default()
        })
    };
    let (model, _) = train(
        &gen(6000, 1)?,
        &ModelSpec::default(),
        &LossConfig::default(),
        &TrainConfig {
            epochs: 10,
            ..Default::default()
        },
    )?;
    let predict = |n, seed| -> jam_age::Result<Vec<LabeledPrediction>> {
        let data = gen(n, seed)?;
        let out = model.predict(&data)?;
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
    };

    let settings = CalibrationSettings {
        target_fpr: 0.05,
        ..Default::default()
    };
    let cal = predict(20_000, 2)?;
    let confidence = calibrate(&cal, &settings)?;
    let baseline = fixed_width_baseline(&cal, &settings)?;

    let rec = compare(40.0, 2.0, 44.0, &confidence)?;
    println!("{}", rec.to_json_line());

    let test = predict(20_000, 3)?;
    let truths: Vec<f64> = test.iter().map(|p| p.truth).collect();
    for (name, table) in [("confidence", &confidence), ("fixed width", &baseline)] {
        let s = comparability_stats(&ranges_for(&test, table)?, &truths)?;
        println!(
            "{name:>11}: outside-range {:.4}  median width {:.2}  mean width {:.2}",
            s.empirical_fpr, s.median_width, s.mean_width
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("comparability example failed");
}
