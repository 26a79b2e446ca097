//! Exact dense linear algebra on finite-state Markov chains.
//!
//! Every quantity here is computed exactly (up to floating point) so that
//! the perturbation bounds can be checked as literal inequalities rather
//! than statistically. State spaces are capped at [`MAX_STATES`] states
//! (product spaces at [`MAX_PRODUCT_STATES`]).
//!
//! Conventions:
//! * the total-variation distance is `sup_{|f|≤1} |μf − νf|`, i.e. the full
//!   L1 distance with range `[0, 2]`;
//! * the spectral gap is `κ(P) = 1 − max_{i≥2} λ_i²`, which is the gap of
//!   `P²` in the Dirichlet-form sense.

mod discretize;
mod distances;
mod drift;
mod product;
mod spectral;
mod sweep;

pub use discretize::{discretize_kernel, Grid};
pub use distances::{chi2_div, kernel_tv, kernel_v_norm, tv_dist, v_norm_dist};
pub(crate) use drift::tail_rate;
pub use drift::{drift_rate_at, ergodicity_rate, lyapunov_fit, DriftFit, ErgodicityRate};
pub use product::{product_distribution, pt_product_kernel, ProductSpace};
pub use spectral::{l2_norm, op_norm, op_norm_diff, spectral_gap, SpectralReport};
pub use sweep::{
    fit_loglog_slope, perturbation_sweep, FittedExponents, GridRwmFamily, MetropolisFamily,
    PerturbationFamily, PerturbationReport, SweepReport,
};

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_STATES: usize = 2_000;
pub const MAX_PRODUCT_STATES: usize = 10_000;

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// A row-stochastic transition matrix with optional metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteChain {
    p: DMatrix<f64>,
    labels: Option<Vec<Vec<f64>>>,
    pi: Option<Vec<f64>>,
}

impl FiniteChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_matrix(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::DimensionMismatch {
                expected: p.nrows(),
                got: p.ncols(),
            });
        }
        if p.nrows() == 0 {
            return Err(Error::InvalidArgument("empty chain".into()));
        }
        for i in 0..p.nrows() {
            let row = p.row(i);
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative or NaN entry")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            p,
            labels: None,
            pi: None,
        })
    }

    /// Attach a known stationary distribution after checking it.
    pub fn with_pi(mut self, pi: Vec<f64>) -> Result<Self> {
        check_len(self.n(), pi.len())?;
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOL || pi.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(format!("pi sums to {total}")));
        }
        let residual = stationarity_residual(&self.p, &pi);
        if residual > STATIONARY_TOL {
            return Err(Error::InvalidArgument(format!(
                "pi is not stationary (residual {residual:.3e})"
            )));
        }
        self.pi = Some(pi);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Vec<f64>>) -> Result<Self> {
        check_len(self.n(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.p.row(i).iter().copied().collect()
    }

    pub fn labels(&self) -> Option<&[Vec<f64>]> {
        self.labels.as_deref()
    }

    pub fn pi(&self) -> Option<&[f64]> {
        self.pi.as_deref()
    }

    /// The attached stationary distribution, or a freshly solved one.
    pub fn stationary_or_solve(&self) -> Result<Vec<f64>> {
        match &self.pi {
            Some(pi) => Ok(pi.clone()),
            None => stationary(self),
        }
    }

    /// `P^n` by repeated multiplication.
    pub fn power(&self, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::identity(self.n(), self.n());
        for _ in 0..n {
            out = &out * &self.p;
        }
        out
    }

    /// `(Pf)_i`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (&self.p * DVector::from_column_slice(f)).iter().copied().collect()
    }

    /// Chain with transition matrix `1·πᵀ` (independent resampling).
    pub fn independent(pi: &[f64]) -> Result<Self> {
        let n = pi.len();
        Self::from_matrix(DMatrix::from_fn(n, n, |_, j| pi[j]))?.with_pi(pi.to_vec())
    }

    /// Two-state chain `[[1-p, p], [q, 1-q]]`.
    pub fn two_state(p: f64, q: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]])
    }

    /// Metropolis chain for `pi` driven by a symmetric sub-stochastic
    /// proposal matrix; reversible with respect to `pi` by construction.
    pub fn metropolis(proposal: &DMatrix<f64>, pi: &[f64]) -> Result<Self> {
        let n = pi.len();
        check_len(n, proposal.nrows())?;
        if pi.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("metropolis target must be positive".into()));
        }
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j {
                    let v = proposal[(i, j)] * (pi[j] / pi[i]).min(1.0);
                    p[(i, j)] = v;
                    off += v;
                }
            }
            if off > 1.0 + ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("proposal row {i} exceeds 1")));
            }
            p[(i, i)] = (1.0 - off).max(0.0);
        }
        let total: f64 = pi.iter().sum();
        let pi: Vec<f64> = pi.iter().map(|v| v / total).collect();
        Self::from_matrix(p)?.with_pi(pi)
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `‖πᵀP − πᵀ‖₁`.
pub fn stationarity_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    (0..n)
        .map(|j| ((0..n).map(|i| pi[i] * p[(i, j)]).sum::<f64>() - pi[j]).abs())
        .sum()
}

/// `max_{i,j} |π_i P_ij − π_j P_ji|`.
pub fn reversibility_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((pi[i] * p[(i, j)] - pi[j] * p[(j, i)]).abs());
        }
    }
    worst
}

/// First state not reached from state 0, if any.
fn unreached(p: &DMatrix<f64>, transpose: bool) -> Option<usize> {
    let n = p.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            let w = if transpose { p[(j, i)] } else { p[(i, j)] };
            if w > 0.0 && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().position(|s| !s)
}

/// Irreducibility via forward and backward reachability from state 0.
pub fn is_irreducible(chain: &FiniteChain) -> bool {
    unreached(&chain.p, false).is_none() && unreached(&chain.p, true).is_none()
}

/// The unique stationary distribution of an irreducible chain.
pub fn stationary(chain: &FiniteChain) -> Result<Vec<f64>> {
    let n = chain.n();
    if n > MAX_STATES {
        return Err(Error::SizeLimit {
            size: n,
            limit: MAX_STATES,
        });
    }
    if let Some(i) = unreached(&chain.p, false).or_else(|| unreached(&chain.p, true)) {
        return Err(Error::ReducibleChain(i));
    }
    // (Pᵀ − I)π = 0 with the last equation replaced by Σπ = 1
    let mut a = chain.p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu
        .solve(&b)
        .ok_or_else(|| Error::Numeric("singular stationarity system".into()))?;
    // one step of iterative refinement
    let r = &b - &a * &pi;
    if let Some(d) = lu.solve(&r) {
        pi += d;
    }
    let pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.into_iter().map(|v| v / total).collect();
    let residual = stationarity_residual(&chain.p, &pi);
    if residual > STATIONARY_TOL {
        return Err(Error::Numeric(format!("stationary residual {residual:.3e}")));
    }
    Ok(pi)
}

#[cfg(test)]
pub(crate) mod testing {
    use nalgebra::DMatrix;
    use rand::Rng;

    use super::FiniteChain;
    use crate::rng::StreamRng;

    pub fn random_distribution(n: usize, rng: &mut StreamRng) -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5f64..1.5).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    pub fn random_symmetric_proposal(n: usize, rng: &mut StreamRng) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w: f64 = rng.random();
                q[(i, j)] = w;
                q[(j, i)] = w;
            }
        }
        let max_row = (0..n).map(|i| q.row(i).sum()).fold(0.0, f64::max);
        q / (max_row * 1.05)
    }

    pub fn random_reversible(n: usize, rng: &mut StreamRng) -> FiniteChain {
        let pi = random_distribution(n, rng);
        FiniteChain::metropolis(&random_symmetric_proposal(n, rng), &pi).unwrap()
    }

    /// A generic (non-reversible) chain with strictly positive entries.
    pub fn random_chain(n: usize, rng: &mut StreamRng) -> FiniteChain {
        let rows = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            })
            .collect();
        FiniteChain::new(rows).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::rng;

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(FiniteChain::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(FiniteChain::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(FiniteChain::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn symmetric_doubly_stochastic_has_uniform_stationary() {
        let c = FiniteChain::new(vec![
            vec![0.5, 0.25, 0.25],
            vec![0.25, 0.5, 0.25],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        for v in stationary(&c).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_state_stationary_closed_form() {
        let c = FiniteChain::two_state(0.2, 0.4).unwrap();
        let pi = stationary(&c).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_reversible_recovers_construction_pi() {
        let mut r = rng::stream(1, 0);
        for _ in 0..10 {
            let pi = random_distribution(30, &mut r);
            let c = FiniteChain::metropolis(&random_symmetric_proposal(30, &mut r), &pi).unwrap();
            let solved = stationary(&c).unwrap();
            let err: f64 = solved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn reducible_chain_rejected() {
        let c = FiniteChain::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(stationary(&c), Err(Error::ReducibleChain(_))));
    }

    #[test]
    fn with_pi_checks_stationarity() {
        let c = FiniteChain::two_state(0.2, 0.4).unwrap();
        assert!(c.clone().with_pi(vec![0.5, 0.5]).is_err());
        assert!(c.with_pi(vec![2.0 / 3.0, 1.0 / 3.0]).is_ok());
    }
}
