//! Random-walk Metropolis and MALA on a 2-d Gaussian: acceptance rates,
//! autocorrelation times and effective sample sizes side by side.
//!
//! ```bash
//! cargo run --release --example rwm_and_mala
//! ```

use perturbed_mcmc::densities::LogTarget;
use perturbed_mcmc::diagnostics::{coordinate_iat, mean_var};
use perturbed_mcmc::samplers::{run_chain, MHKernel};

fn main() -> perturbed_mcmc::Result<()> {
    let target = LogTarget::isotropic_gaussian(2, 4.0);
    let n = 50_000;
    for kernel in [
        MHKernel::random_walk(target.clone(), 1.5)?,
        MHKernel::langevin(target.clone(), 1.0)?,
    ] {
        let mut trace = run_chain(&kernel, &[3.0, -3.0], n, 42)?;
        trace.discard(1_000);
        let iat = coordinate_iat(&trace)?;
        let (m, v) = mean_var(&trace.coordinate(0));
        println!("{}", kernel.descriptor());
        println!("  acceptance  {:.3}", trace.acceptance_rate());
        println!("  x0 mean/var {m:.3} / {v:.3} (target 0 / 4)");
        for (j, r) in iat.iter().enumerate() {
            println!("  coord {j}: tau = {:6.2}  ess = {:8.0}", r.tau, r.ess);
        }
    }
    Ok(())
}
