//! The predator–prey inverse problem: RK2 self-convergence at the true
//! parameters, synthetic data, and the log-posterior near the truth at two
//! solver resolutions.
//!
//! ```bash
//! cargo run --release --example predator_prey
//! ```

use perturbed_mcmc::inverse_problem::{
    forward, inverse_probit, log_posterior, step_at_level, synth_data, ForwardSpec, PPParams, REF_LEVEL, THETA_TRUE,
};

fn main() -> perturbed_mcmc::Result<()> {
    let truth = PPParams::truth();
    let reference = forward(&truth, &ForwardSpec::at_level(REF_LEVEL)?)?;
    let mut prev: Option<f64> = None;
    for j in 0..=4 {
        let f = forward(&truth, &ForwardSpec::at_level(j)?)?;
        let err = f.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let order = prev.map(|p| format!("{:.3}", (p / err).log2())).unwrap_or_default();
        println!("h = {:<8} error = {err:.4e}  observed order {order}", step_at_level(j));
        prev = Some(err);
    }

    let data = synth_data(&truth, step_at_level(REF_LEVEL), 1)?;
    println!("first observations: {:.3?}", &data.y[..6]);
    let x: Vec<f64> = THETA_TRUE.iter().map(|t| inverse_probit(*t)).collect();
    for j in [2, 3] {
        println!("log posterior at truth, h = {}: {:.6}", step_at_level(j), log_posterior(&x, &ForwardSpec::at_level(j)?, &data));
    }
    Ok(())
}
