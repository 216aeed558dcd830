//! Challenge-25 age verification: point-estimate flagging against the
//! confidence-range rule, compared at matched true-positive rate.
//!
//! Run with `cargo run --release --example age_verification`.

use jam_age::calibration::{calibrate, CalibrationSettings, LabeledPrediction, ThresholdTable};
use jam_age::data::{generate, GenConfig};
use jam_age::decision::{verify, VerificationMethod, VerificationPolicy};
use jam_age::loss::LossConfig;
use jam_age::metrics::{default_tpr_grid, match_tpr};
use jam_age::model::{train, ModelSpec, TrainConfig};

pub fn run_example() -> jam_age::Result<()> {
    // Single decisions with a hand-written table.
    let table = ThresholdTable::uniform(2.0, 2.0)?;
    for (mu, sigma) in [(30.0, 2.0), (30.0, 7.0), (23.0, 1.0)] {
        for method in [
            VerificationMethod::SingularRegression,
            VerificationMethod::Confidence,
        ] {
            let rec = verify(
                mu,
                sigma,
                &VerificationPolicy::challenge_25(method),
                Some(&table),
            )?;
            println!("{}", rec.to_json_line());
        }
    }

    // Population rates with a trained model.
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
    let table = calibrate(&predict(20_000, 2)?, &CalibrationSettings::default())?;
    let m = match_tpr(
        &predict(20_000, 3)?,
        &table,
        18.0,
        25.0,
        &default_tpr_grid(),
    )?;
    let fmt =
        |r: jam_age::metrics::Rate| r.value().map_or("undefined".into(), |v| format!("{v:.4}"));
    println!(
        "singular regression: TPR {}  FPR {}",
        fmt(m.singular_regression.tpr),
        fmt(m.singular_regression.fpr)
    );
    println!(
        "confidence (lower thresholds x{:.3}): TPR {}  FPR {}",
        m.lower_scale.unwrap_or(0.0),
        fmt(m.confidence.tpr),
        fmt(m.confidence.fpr)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("verification example failed");
}
