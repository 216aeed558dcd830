//! Evaluate the three loss terms and their gradients for a small batch.
//!
//! Run with `cargo run --example loss_terms`.

use jam_age::loss::{age_decay, loss_forward_backward, LossConfig, PredictionBatch};

pub fn run_example() -> jam_age::Result<()> {
    let cfg = LossConfig::default();
    let mu = [20.0, 31.0, 64.0];
    let sigma = [2.0, 3.0, 6.0];
    let target = [20.0, 25.0, 70.0];
    let batch = PredictionBatch::new(&mu, &sigma, &target, &cfg)?;
    let (loss, grads) = loss_forward_backward(&batch, &cfg)?;

    for age in [20.0, 25.0, 70.0] {
        println!("age decay at {age}: {:.4}", age_decay(age, &cfg)?);
    }
    println!(
        "l_reg {:.5}  l_std {:.5}  l_dist {:.5}  l_total {:.5}",
        loss.l_reg, loss.l_std, loss.l_dist, loss.l_total
    );
    for i in 0..mu.len() {
        println!(
            "sample {i}: d/dmu {:+.5}  d/dsigma {:+.5}",
            grads.mu[i], grads.sigma[i]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("loss example failed");
}
