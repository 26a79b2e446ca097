//! Integrated autocorrelation time of an AR(1) series, whose exact value
//! is `(1 + φ)/(1 − φ)`.
//!
//! ```bash
//! cargo run --release --example autocorrelation
//! ```

use perturbed_mcmc::diagnostics::autocorr_time;
use perturbed_mcmc::rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> perturbed_mcmc::Result<()> {
    let mut g = rng::stream(1, 0);
    for phi in [0.0, 0.5, 0.9] {
        let mut x = 0.0;
        let series: Vec<f64> = (0..200_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut g);
                x = phi * x + z;
                x
            })
            .collect();
        let r = autocorr_time(&series)?;
        println!(
            "phi = {phi}: tau = {:.3} (exact {:.3}), window = {}, ess = {:.0}",
            r.tau,
            (1.0 + phi) / (1.0 - phi),
            r.window,
            r.ess
        );
    }
    Ok(())
}
