use nalgebra::DMatrix;

use super::{FiniteChain, MAX_STATES};
use crate::error::{Error, Result};
use crate::samplers::MHKernel;

/// Largest quadrature overshoot of `Σ_{j≠i} P_ij` above 1 that is absorbed
/// by rescaling; anything larger means the grid is too coarse.
const MAX_QUADRATURE_EXCESS: f64 = 1e-3;

/// Cell-centred tensor grid on a box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != cells.len() || lower.is_empty() {
            return Err(Error::InvalidArgument("grid bounds and cell counts disagree".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) || cells.contains(&0) {
            return Err(Error::InvalidArgument("degenerate grid".into()));
        }
        Ok(Self { lower, upper, cells })
    }

    /// `n` cells on `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Cell centres, last axis varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for mut idx in 0..self.len() {
            let mut p = vec![0.0; self.dim()];
            for a in (0..self.dim()).rev() {
                let k = idx % self.cells[a];
                idx /= self.cells[a];
                p[a] = self.lower[a] + (k as f64 + 0.5) * self.spacing(a);
            }
            out.push(p);
        }
        out
    }
}

/// Midpoint-quadrature discretization of an MH kernel on `grid`.
///
/// Off-diagonal mass is `β(x_i, x_j)·|cell|` with
/// `β(x, y) = min{π(y)R(y, x)/π(x), R(x, y)}`; rejection mass (including
/// proposals that leave the grid) goes to the diagonal. Because
/// `π_i β(x_i, x_j) = min{π_j R(x_j, x_i), π_i R(x_i, x_j)}` is symmetric,
/// the chain is reversible with respect to the grid weights `π(x_i)`,
/// which are attached as its stationary law.
pub fn discretize_kernel(kernel: &MHKernel, grid: &Grid) -> Result<FiniteChain> {
    let target = kernel.target();
    if grid.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: grid.dim(),
        });
    }
    let n = grid.len();
    if n > MAX_STATES {
        return Err(Error::SizeLimit {
            size: n,
            limit: MAX_STATES,
        });
    }
    let points = grid.points();
    let log_pi: Vec<f64> = points.iter().map(|p| target.log_density(p)).collect();
    if let Some(i) = log_pi.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("grid point {:?} outside support", points[i])));
    }
    let log_vol = grid.cell_volume().ln();
    // log R(x_i, x_j)
    let grads: Vec<Option<Vec<f64>>> = points.iter().map(|p| kernel.gradient_if_needed(p)).collect();
    let log_r = DMatrix::from_fn(n, n, |i, j| {
        kernel.log_q(&points[i], grads[i].as_deref(), &points[j])
    });

    let mut p = DMatrix::zeros(n, n);
    let mut worst_excess: f64 = 0.0;
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let forward = log_r[(i, j)];
            let backward = log_pi[j] - log_pi[i] + log_r[(j, i)];
            let v = (forward.min(backward) + log_vol).exp();
            p[(i, j)] = v;
            off += v;
        }
        worst_excess = worst_excess.max(off - 1.0);
    }
    if worst_excess > MAX_QUADRATURE_EXCESS {
        return Err(Error::Renormalization(worst_excess));
    }
    if worst_excess > 0.0 {
        // a uniform rescale keeps π_i P_ij symmetric
        let scale = 1.0 / (1.0 + worst_excess);
        p *= scale;
    }
    for i in 0..n {
        p[(i, i)] = 0.0;
        let off: f64 = p.row(i).sum();
        p[(i, i)] = (1.0 - off).max(0.0);
    }

    let max_log = log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_pi.iter().map(|v| (v - max_log).exp()).collect();
    let total: f64 = weights.iter().sum();
    let pi: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
    FiniteChain::from_matrix(p)?.with_labels(points)?.with_pi(pi)
}
