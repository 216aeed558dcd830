//! Load a run configuration: defaults, overridden by a TOML document with
//! either sections or dotted keys.
//!
//! Run with `cargo run --example run_config`.

use jam_age::config::RunConfig;

pub fn run_example() -> jam_age::Result<()> {
    let cfg = RunConfig::from_toml(
        r#"
gen.n = 5000
gen.noise_slope = 2.0
train.epochs = 40
policy.legal_age = 21.0
policy.challenge_age = 28.0

[calibration]
target_fpr = 0.01
"#,
    )?
    .with_seed(7);
    println!("{}", cfg.to_toml()?);

    match RunConfig::from_toml("train.epoch = 3\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are errors"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("config example failed");
}
