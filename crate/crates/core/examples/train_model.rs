//! Generate synthetic data, train the mean/std network and save a checkpoint.
//!
//! Run with `cargo run --release --example train_model`.

use jam_age::data::{generate, GenConfig};
use jam_age::loss::LossConfig;
use jam_age::metrics::mae;
use jam_age::model::{read_model, train, write_model, Checkpoint, ModelSpec, TrainConfig};

pub fn run_example() -> jam_age::Result<()> {
    let data = generate(&GenConfig {
        n: 3000,
        seed: 1,
        ..Default::default()
    })?;
    let train_cfg = TrainConfig {
        epochs: 10,
        seed: 1,
        ..Default::default()
    };
    let (model, log) = train(
        &data,
        &ModelSpec::default(),
        &LossConfig::default(),
        &train_cfg,
    )?;

    for e in log.epochs.iter().step_by(3) {
        println!(
            "epoch {:>2}  l_total {:.4}  train MAE {:.2}  validation MAE {:.2}",
            e.epoch,
            e.train.l_total,
            e.train_mae,
            e.validation_mae.unwrap_or(f64::NAN)
        );
    }

    let held_out = generate(&GenConfig {
        n: 2000,
        seed: 2,
        ..Default::default()
    })?;
    let out = model.predict(&held_out)?;
    let ages = held_out.ages();
    let mean = data.ages().iter().sum::<f64>() / data.len() as f64;
    println!(
        "held-out MAE {:.2} (constant-mean predictor {:.2})",
        mae(&out.mu, &ages)?,
        mae(&vec![mean; ages.len()], &ages)?
    );

    let ck = Checkpoint {
        model,
        loss: LossConfig::default(),
        train: Some(train_cfg),
    };
    let text = write_model(&ck)?;
    assert_eq!(read_model(&text)?, ck);
    println!(
        "checkpoint: {} bytes of TOML, {} parameters",
        text.len(),
        ck.model.params().param_count()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("training example failed");
}
