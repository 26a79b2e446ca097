//! Scaling exponents of a perturbation sweep: the spectral-gap deficit
//! should shrink at least linearly in ε and the χ² divergence
//! quadratically. Runs one random Metropolis family and one grid
//! discretization of RWM on a truncated Gaussian.
//!
//! ```bash
//! cargo run --release --example perturbation_sweep
//! ```

use perturbed_mcmc::densities::{Bump, LogTarget};
use perturbed_mcmc::finite_oracle::{perturbation_sweep, Grid, GridRwmFamily, MetropolisFamily, SweepReport};

fn show(name: &str, s: &SweepReport) {
    println!("{name}");
    println!("  {:>7} {:>12} {:>12} {:>12}", "eps", "kappa-kappa^", "chi2", "op_norm");
    for r in &s.reports {
        println!("  {:>7} {:>12.4e} {:>12.4e} {:>12.4e}", r.eps, r.kappa_deficit(), r.chi2, r.op_norm);
    }
    println!("  slopes: {:?}", s.exponents);
    println!("  max (kappa-kappa^)+/eps = {:.4}", s.max_deficit_ratio);
}

fn main() -> perturbed_mcmc::Result<()> {
    let eps = [0.2, 0.1, 0.05, 0.025];
    show("random metropolis chain, 30 states", &perturbation_sweep(&MetropolisFamily::random(30, 1)?, &eps)?);
    let grid = GridRwmFamily {
        target: LogTarget::truncated_normal(vec![-4.0], vec![4.0]),
        bump: Bump::sin_coordinate(0),
        h: 0.5,
        grid: Grid::interval(-4.0, 4.0, 120)?,
    };
    show("grid RWM, 120 cells", &perturbation_sweep(&grid, &eps)?);
    Ok(())
}
