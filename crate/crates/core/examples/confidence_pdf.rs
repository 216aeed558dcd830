//! The two-piece normal density implied by a prediction and its bucket's
//! lower and upper multipliers.
//!
//! Run with `cargo run --example confidence_pdf`.

use jam_age::calibration::piecewise_pdf;

pub fn run_example() -> jam_age::Result<()> {
    let (mu, sigma, lt, ut) = (30.0, 2.0, 1.2, 2.1);
    let mut mass = 0.0;
    let step = 0.01;
    let mut x = mu - 15.0 * sigma * lt;
    while x < mu + 15.0 * sigma * ut {
        mass += piecewise_pdf(x + step / 2.0, mu, sigma, lt, ut)? * step;
        x += step;
    }
    println!("total mass {mass:.6}");
    for age in [24.0, 27.0, 29.9, 30.0, 33.0, 38.0] {
        let p = piecewise_pdf(age, mu, sigma, lt, ut)?;
        println!("p({age:>4}) = {p:.5} {}", "#".repeat((p * 400.0) as usize));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("pdf example failed");
}
