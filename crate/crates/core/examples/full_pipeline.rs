//! The file-based pipeline the `jam` binary runs: gen, train, calibrate,
//! eval and decide, driven through the same entry point as the command line.
//!
//! Run with `cargo run --release --example full_pipeline`.

use std::path::PathBuf;

use jam_age::cli::main_with_args;
use jam_age::JamError;

fn jam(args: &[&str]) -> jam_age::Result<String> {
    let mut out = Vec::new();
    let code = main_with_args(std::iter::once("jam").chain(args.iter().copied()), &mut out);
    if code != 0 {
        return Err(JamError::InvalidConfig(format!(
            "`jam {}` exited with {code}",
            args.join(" ")
        )));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

pub fn run_example() -> jam_age::Result<()> {
    let dir: PathBuf = std::env::temp_dir().join(format!("jam-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| JamError::io(&dir, e))?;
    let p = |name: &str| dir.join(name).display().to_string();

    jam(&[
        "--seed",
        "1",
        "gen",
        "--n",
        "20000",
        "--out",
        &p("train.csv"),
    ])?;
    jam(&["--seed", "2", "gen", "--n", "20000", "--out", &p("cal.csv")])?;
    jam(&[
        "--seed",
        "3",
        "gen",
        "--n",
        "20000",
        "--out",
        &p("test.csv"),
    ])?;
    jam(&[
        "--seed",
        "1",
        "train",
        "--data",
        &p("train.csv"),
        "--model-out",
        &p("model.toml"),
        "--log-out",
        &p("log.csv"),
    ])?;
    jam(&[
        "calibrate",
        "--model",
        &p("model.toml"),
        "--data",
        &p("cal.csv"),
        "--out",
        &p("table.toml"),
        "--baseline-out",
        &p("baseline.toml"),
        "--target-fpr",
        "0.02",
    ])?;
    jam(&[
        "eval",
        "--model",
        &p("model.toml"),
        "--data",
        &p("test.csv"),
        "--table",
        &p("table.toml"),
        "--task",
        "verify",
        "--method",
        "both",
        "--out",
        &p("verify.toml"),
        "--summary-out",
        &p("verify.csv"),
    ])?;
    jam(&[
        "eval",
        "--model",
        &p("model.toml"),
        "--data",
        &p("test.csv"),
        "--table",
        &p("table.toml"),
        "--task",
        "compare",
        "--baseline",
        "fixed",
        "--baseline-table",
        &p("baseline.toml"),
        "--out",
        &p("compare.toml"),
        "--summary-out",
        &p("compare.csv"),
    ])?;
    let line = jam(&[
        "decide",
        "--table",
        &p("table.toml"),
        "--mu",
        "30",
        "--sigma",
        "2",
        "--task",
        "verify",
        "--method",
        "confidence",
    ])?;
    print!("{line}");

    for summary in ["verify.csv", "compare.csv"] {
        let path = dir.join(summary);
        let text = std::fs::read_to_string(&path).map_err(|e| JamError::io(&path, e))?;
        for l in text.lines().filter(|l| {
            !l.contains("per_bucket")
                && (l.contains("fpr") || l.contains("tpr") || l.contains("median_width"))
        }) {
            println!("{l}");
        }
    }
    std::fs::remove_dir_all(&dir).map_err(|e| JamError::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("pipeline example failed");
}
