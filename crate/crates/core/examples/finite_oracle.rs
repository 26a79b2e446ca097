//! Exact quantities for a small reversible chain and a perturbation of
//! it: stationary laws, spectral gaps, the weighted operator norm of
//! `P − P̂`, and the χ² divergence of the stationary laws.
//!
//! ```bash
//! cargo run --example finite_oracle
//! ```

use perturbed_mcmc::finite_oracle::{
    chi2_div, kernel_tv, op_norm_diff, spectral_gap, tv_dist, MetropolisFamily, PerturbationFamily,
};

fn main() -> perturbed_mcmc::Result<()> {
    let family = MetropolisFamily::random(8, 3)?;
    let p = family.base()?;
    let pi = p.stationary_or_solve()?;
    println!("pi     = {:.4?}", pi);
    println!("kappa  = {:.6}", spectral_gap(&p)?.kappa);

    for eps in [0.2, 0.1, 0.05] {
        let phat = family.perturbed(eps)?;
        let pi_hat = phat.stationary_or_solve()?;
        println!(
            "eps {eps:<5} kappa_hat {:.6}  ||P - P_hat||_pi {:.3e}  TV(pi, pi_hat) {:.3e}  chi2 {:.3e}  kernel TV {:.3e}",
            spectral_gap(&phat)?.kappa,
            op_norm_diff(&p, &phat, &pi)?,
            tv_dist(&pi, &pi_hat)?,
            chi2_div(&pi_hat, &pi)?,
            kernel_tv(&p, &phat)?,
        );
    }
    Ok(())
}
