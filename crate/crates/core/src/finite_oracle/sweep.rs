use nalgebra::DMatrix;
use serde::Serialize;

use super::drift::least_squares_slope;
use super::{
    chi2_div, discretize_kernel, kernel_tv, kernel_v_norm, op_norm_diff, spectral_gap, FiniteChain, Grid,
};
use crate::densities::{make_perturbed, Bump, LogTarget};
use crate::error::{Error, Result};
use crate::rng;
use crate::samplers::MHKernel;
use rand::Rng;

/// A one-parameter family `ε ↦ P̂_ε` with `P̂_0 = P`.
pub trait PerturbationFamily {
    fn base(&self) -> Result<FiniteChain>;
    fn perturbed(&self, eps: f64) -> Result<FiniteChain>;

    /// Lyapunov weight used for the V-norm distance; `V ≡ 1` by default.
    fn lyapunov(&self, n: usize) -> Vec<f64> {
        vec![1.0; n]
    }
}

/// Metropolis chains on `π` and `π̂_ε ∝ π·exp(ε·b)` sharing one symmetric
/// proposal, with `|b| ≤ 1`.
#[derive(Clone, Debug)]
pub struct MetropolisFamily {
    pub pi: Vec<f64>,
    pub proposal: DMatrix<f64>,
    pub bump: Vec<f64>,
}

impl MetropolisFamily {
    pub fn new(pi: Vec<f64>, proposal: DMatrix<f64>, bump: Vec<f64>) -> Result<Self> {
        super::check_len(pi.len(), bump.len())?;
        super::check_len(pi.len(), proposal.nrows())?;
        if bump.iter().any(|b| !(b.abs() <= 1.0)) {
            return Err(Error::InvalidArgument("bump must lie in [-1, 1]".into()));
        }
        Ok(Self { pi, proposal, bump })
    }

    /// A random instance on `n` states: log-uniform weights on `[-1.5, 1.5]`,
    /// a symmetric proposal with i.i.d. uniform entries scaled so rows sum to
    /// at most `1/1.05`, and a uniform bump on `[-1, 1]`.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two states".into()));
        }
        let mut r = rng::stream(seed, 0);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.5f64..1.5).exp()).collect();
        let total: f64 = w.iter().sum();
        let pi = w.into_iter().map(|v| v / total).collect();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = r.random();
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let max_row = (0..n).map(|i| q.row(i).sum()).fold(0.0, f64::max);
        let q = q / (1.05 * max_row);
        let bump = (0..n).map(|_| r.random_range(-1.0..=1.0)).collect();
        Self::new(pi, q, bump)
    }

    pub fn perturbed_target(&self, eps: f64) -> Vec<f64> {
        let w: Vec<f64> = self.pi.iter().zip(&self.bump).map(|(p, b)| p * (eps * b).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

impl PerturbationFamily for MetropolisFamily {
    fn base(&self) -> Result<FiniteChain> {
        FiniteChain::metropolis(&self.proposal, &self.pi)
    }

    fn perturbed(&self, eps: f64) -> Result<FiniteChain> {
        FiniteChain::metropolis(&self.proposal, &self.perturbed_target(eps))
    }
}

/// Grid discretizations of RWM on `π` and on `π̂_ε = π·exp(ε·bump)`.
#[derive(Clone, Debug)]
pub struct GridRwmFamily {
    pub target: LogTarget,
    pub bump: Bump,
    pub h: f64,
    pub grid: Grid,
}

impl PerturbationFamily for GridRwmFamily {
    fn base(&self) -> Result<FiniteChain> {
        discretize_kernel(&MHKernel::random_walk(self.target.clone(), self.h)?, &self.grid)
    }

    fn perturbed(&self, eps: f64) -> Result<FiniteChain> {
        let pair = make_perturbed(&self.target, &self.bump, eps)?;
        discretize_kernel(&MHKernel::random_walk(pair.perturbed, self.h)?, &self.grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub eps: f64,
    /// `‖P − P̂‖_π`.
    pub op_norm: f64,
    pub kappa_base: f64,
    pub kappa_pert: f64,
    /// `D_χ²(π̂‖π)`.
    pub chi2: f64,
    /// `max_x ‖δ_x P − δ_x P̂‖_TV` (L1 convention).
    pub tv_kernel: f64,
    /// `max_x ‖δ_x P − δ_x P̂‖_V / V(x)`.
    pub v_norm_kernel: f64,
}

impl PerturbationReport {
    /// `κ − κ̂`; negative when the perturbation speeds mixing up.
    pub fn kappa_deficit(&self) -> f64 {
        self.kappa_base - self.kappa_pert
    }
}

/// Log-log slopes against ε. `None` when fewer than two points are usable.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FittedExponents {
    /// Fitted on the ε where `κ − κ̂ > 0`; `None` when the perturbation
    /// never shrinks the gap.
    pub kappa_deficit: Option<f64>,
    pub chi2: Option<f64>,
    pub op_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub reports: Vec<PerturbationReport>,
    pub exponents: FittedExponents,
    /// `max_ε (κ − κ̂)₊ / ε` over the positive ε.
    pub max_deficit_ratio: f64,
}

/// Values below this are treated as exact zeros and skipped by the fit.
const FIT_FLOOR: f64 = 1e-14;

/// Least-squares slope of `log y` against `log x`, skipping non-positive
/// or negligible entries.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > FIT_FLOOR)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    Some(least_squares_slope(&lx, &ly))
}

/// Smallest ratio `max ε / min ε` accepted for a scaling fit.
const MIN_EPS_SPAN: f64 = 8.0;

/// Runs the family at every ε and fits the scaling exponents.
///
/// At least four positive ε spanning a factor of 8 are required; ε = 0 may
/// be included as a sanity row but never enters the fits.
pub fn perturbation_sweep<F: PerturbationFamily + ?Sized>(family: &F, eps: &[f64]) -> Result<SweepReport> {
    let positive: Vec<f64> = eps.iter().copied().filter(|e| *e > 0.0).collect();
    if eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidArgument("eps must be nonnegative".into()));
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    if positive.len() < 4 || hi / lo < MIN_EPS_SPAN {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 positive eps spanning a factor {MIN_EPS_SPAN}"
        )));
    }
    let base = family.base()?;
    let pi = base.stationary_or_solve()?;
    let kappa_base = spectral_gap(&base)?.kappa;
    let v = family.lyapunov(base.n());

    let mut reports = Vec::with_capacity(eps.len());
    for &e in eps {
        let pert = family.perturbed(e)?;
        let pi_hat = pert.stationary_or_solve()?;
        reports.push(PerturbationReport {
            eps: e,
            op_norm: op_norm_diff(&base, &pert, &pi)?,
            kappa_base,
            kappa_pert: spectral_gap(&pert)?.kappa,
            chi2: chi2_div(&pi_hat, &pi)?,
            tv_kernel: kernel_tv(&base, &pert)?,
            v_norm_kernel: kernel_v_norm(&base, &pert, &v)?,
        });
    }

    let xs: Vec<f64> = reports.iter().map(|r| r.eps).collect();
    let col = |f: fn(&PerturbationReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let exponents = FittedExponents {
        kappa_deficit: fit_loglog_slope(&xs, &col(|r| r.kappa_deficit().max(0.0))),
        chi2: fit_loglog_slope(&xs, &col(|r| r.chi2)),
        op_norm: fit_loglog_slope(&xs, &col(|r| r.op_norm)),
    };
    let max_deficit_ratio = reports
        .iter()
        .filter(|r| r.eps > 0.0)
        .map(|r| r.kappa_deficit().max(0.0) / r.eps)
        .fold(0.0, f64::max);
    Ok(SweepReport {
        reports,
        exponents,
        max_deficit_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

    fn random_family(seed: u64, n: usize) -> MetropolisFamily {
        MetropolisFamily::random(n, seed).unwrap()
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs = [0.2, 0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((fit_loglog_slope(&xs, &ys).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(fit_loglog_slope(&[0.1], &[1.0]), None);
    }

    #[test]
    fn zero_eps_row_is_exact() {
        let fam = random_family(3, 12);
        let mut eps = SWEEP.to_vec();
        eps.push(0.0);
        let s = perturbation_sweep(&fam, &eps).unwrap();
        let z = s.reports.last().unwrap();
        assert_eq!(z.op_norm, 0.0);
        assert_eq!(z.chi2, 0.0);
        assert_eq!(z.tv_kernel, 0.0);
        assert_eq!(z.kappa_pert, z.kappa_base);
    }

    #[test]
    fn chi2_scales_quadratically_on_random_families() {
        for seed in 0..5 {
            let s = perturbation_sweep(&random_family(seed, 15), &SWEEP).unwrap();
            let slope = s.exponents.chi2.unwrap();
            assert!((1.7..=2.3).contains(&slope), "seed {seed}: {slope}");
            assert!(s.max_deficit_ratio <= 10.0);
        }
    }

    #[test]
    fn grid_family_sweep() {
        let fam = GridRwmFamily {
            target: LogTarget::truncated_normal(vec![-4.0], vec![4.0]),
            bump: Bump::sin_coordinate(0),
            h: 0.5,
            grid: Grid::interval(-4.0, 4.0, 120).unwrap(),
        };
        let s = perturbation_sweep(&fam, &SWEEP).unwrap();
        let slope = s.exponents.chi2.unwrap();
        assert!((1.7..=2.3).contains(&slope), "{slope}");
        assert!(s.exponents.op_norm.unwrap() > 0.8);
    }

    #[test]
    fn narrow_sweeps_are_rejected() {
        let fam = random_family(1, 5);
        assert!(perturbation_sweep(&fam, &[0.1, 0.09, 0.08, 0.07]).is_err());
        assert!(perturbation_sweep(&fam, &[0.2, 0.025]).is_err());
        assert!(perturbation_sweep(&fam, &[0.2, 0.1, 0.05, -0.025]).is_err());
    }
}
