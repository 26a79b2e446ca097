//! Build a perturbed target `π̂ ∝ π·exp(ε·bump)` and confirm the density
//! ratio stays inside `[e^{-ε}, e^{ε}]` once the normalization offset is
//! removed.
//!
//! ```bash
//! cargo run --example perturbed_density
//! ```

use perturbed_mcmc::densities::{make_perturbed, verify_ratio_bound, Bump, LogTarget};

fn main() -> perturbed_mcmc::Result<()> {
    let base = LogTarget::standard_normal(2);
    let points: Vec<Vec<f64>> = (0..41)
        .flat_map(|i| (0..41).map(move |j| vec![-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64]))
        .collect();

    for eps in [0.2, 0.1, 0.05] {
        let pair = make_perturbed(&base, &Bump::sin_coordinate(0), eps)?;
        let report = verify_ratio_bound(&pair, &points)?;
        println!(
            "eps = {eps:<5} max |log ratio - offset| = {:.4}  gradient bound = {:?}  ok = {}",
            report.max_deviation, pair.eps_grad, report.pass
        );
    }
    Ok(())
}
