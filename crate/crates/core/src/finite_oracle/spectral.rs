use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_len, reversibility_residual, FiniteChain};
use crate::error::{Error, Result};

const REVERSIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    /// `1 − max_{i≥2} λ_i²`.
    pub kappa: f64,
    /// Eigenvalues of `D^{1/2} P D^{-1/2}`, descending.
    pub eigenvalues: Vec<f64>,
    pub reversibility_residual: f64,
}

impl SpectralReport {
    /// Largest modulus among the non-trivial eigenvalues.
    pub fn slem(&self) -> f64 {
        (1.0 - self.kappa).max(0.0).sqrt()
    }
}

fn similarity(p: &DMatrix<f64>, pi: &[f64]) -> DMatrix<f64> {
    let n = pi.len();
    DMatrix::from_fn(n, n, |i, j| pi[i].sqrt() * p[(i, j)] / pi[j].sqrt())
}

/// Spectral gap of a reversible chain.
///
/// The constant eigenvector `√π` is deflated away before taking the
/// spectral radius, so repeated eigenvalues at 1 (near-reducible chains)
/// are still reported correctly.
pub fn spectral_gap(chain: &FiniteChain) -> Result<SpectralReport> {
    let pi = chain.stationary_or_solve()?;
    let residual = reversibility_residual(chain.matrix(), &pi);
    if residual > REVERSIBILITY_TOL {
        return Err(Error::NonReversible(residual));
    }
    let n = chain.n();
    let s = similarity(chain.matrix(), &pi);
    let s = (&s + s.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(s.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));

    let root: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let deflated = DMatrix::from_fn(n, n, |i, j| s[(i, j)] - root[i] * root[j]);
    let radius = SymmetricEigen::new(deflated)
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SpectralReport {
        kappa: (1.0 - radius * radius).clamp(0.0, 1.0),
        eigenvalues,
        reversibility_residual: residual,
    })
}

/// `‖f‖_π`.
pub fn l2_norm(f: &[f64], pi: &[f64]) -> f64 {
    f.iter().zip(pi).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
}

fn weighted_largest_singular_value(a: &DMatrix<f64>, pi: &[f64]) -> Result<f64> {
    if let Some(i) = pi.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroDenominator(i));
    }
    let w = similarity(a, pi);
    Ok(w.singular_values().iter().fold(0.0f64, |m, v| m.max(*v)))
}

/// `‖P‖_π = sup_f ‖Pf‖_π / ‖f‖_π`.
pub fn op_norm(chain: &FiniteChain, pi: &[f64]) -> Result<f64> {
    check_len(chain.n(), pi.len())?;
    weighted_largest_singular_value(chain.matrix(), pi)
}

/// `‖P − P̂‖_π`, the largest singular value of `D^{1/2}(P − P̂)D^{-1/2}`.
pub fn op_norm_diff(p: &FiniteChain, phat: &FiniteChain, pi: &[f64]) -> Result<f64> {
    check_len(p.n(), phat.n())?;
    check_len(p.n(), pi.len())?;
    weighted_largest_singular_value(&(p.matrix() - phat.matrix()), pi)
}
