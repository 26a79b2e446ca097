use nalgebra::DMatrix;

use super::{check_len, FiniteChain, MAX_PRODUCT_STATES};
use crate::error::{Error, Result};
use crate::samplers::accept_probability;

/// Mixed-radix indexing of `Ω₀ × … × Ω_K`, last level varying fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductSpace {
    sizes: Vec<usize>,
}

impl ProductSpace {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn levels(&self) -> usize {
        self.sizes.len()
    }

    pub fn encode(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (c, n)| acc * n + c)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for k in (0..self.sizes.len()).rev() {
            out[k] = index % self.sizes[k];
            index /= self.sizes[k];
        }
        out
    }
}

/// `Π = π₀ × … × π_K` on the product space.
pub fn product_distribution(targets: &[Vec<f64>]) -> Vec<f64> {
    let space = ProductSpace::new(targets.iter().map(Vec::len).collect());
    (0..space.len())
        .map(|i| {
            space
                .decode(i)
                .iter()
                .zip(targets)
                .map(|(c, t)| t[*c])
                .product()
        })
        .collect()
}

/// Exact tempering kernel `(M₀ ⊗ … ⊗ M_K) · (1/K) Σ_k Q_k`.
///
/// `Q_k` exchanges coordinates `k` and `k+1` with probability
/// `min{1, π_k(x^{k+1}) π_{k+1}(x^k) / (π_k(x^k) π_{k+1}(x^{k+1}))}`.
/// All levels must share one state space for swaps to make sense.
pub fn pt_product_kernel(level_chains: &[FiniteChain], targets: &[Vec<f64>]) -> Result<FiniteChain> {
    if level_chains.len() < 2 {
        return Err(Error::InvalidArgument("need at least two levels".into()));
    }
    check_len(level_chains.len(), targets.len())?;
    let m = level_chains[0].n();
    for (c, t) in level_chains.iter().zip(targets) {
        check_len(m, c.n())?;
        check_len(m, t.len())?;
        if let Some(i) = t.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::ZeroDenominator(i));
        }
    }
    let space = ProductSpace::new(vec![m; level_chains.len()]);
    let size = space.len();
    if size > MAX_PRODUCT_STATES {
        return Err(Error::SizeLimit {
            size,
            limit: MAX_PRODUCT_STATES,
        });
    }
    let top = level_chains.len() - 1;
    let log_t: Vec<Vec<f64>> = targets.iter().map(|t| t.iter().map(|v| v.ln()).collect()).collect();

    // sparse rows of Q = (1/K) Σ Q_k
    let swap_rows: Vec<Vec<(usize, f64)>> = (0..size)
        .map(|y| {
            let c = space.decode(y);
            let mut stay = 0.0;
            let mut moves = Vec::with_capacity(top + 1);
            for k in 0..top {
                let (a, b) = (c[k], c[k + 1]);
                let log_a = log_t[k][b] + log_t[k + 1][a] - log_t[k][a] - log_t[k + 1][b];
                let alpha = accept_probability(log_a);
                let mut swapped = c.clone();
                swapped.swap(k, k + 1);
                moves.push((space.encode(&swapped), alpha / top as f64));
                stay += (1.0 - alpha) / top as f64;
            }
            moves.push((y, stay));
            moves
        })
        .collect();

    let mut p = DMatrix::zeros(size, size);
    for x in 0..size {
        let cx = space.decode(x);
        for (y, swaps) in swap_rows.iter().enumerate() {
            let cy = space.decode(y);
            let w: f64 = cx
                .iter()
                .zip(&cy)
                .zip(level_chains)
                .map(|((a, b), ch)| ch.matrix()[(*a, *b)])
                .product();
            if w == 0.0 {
                continue;
            }
            for &(z, q) in swaps {
                p[(x, z)] += w * q;
            }
        }
    }
    // absorb rounding so rows are stochastic to machine precision
    for x in 0..size {
        let s: f64 = p.row(x).sum();
        p.row_mut(x).iter_mut().for_each(|v| *v /= s);
    }
    FiniteChain::from_matrix(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_oracle::testing::random_symmetric_proposal;
    use crate::finite_oracle::{stationarity_residual, stationary};
    use crate::rng;

    #[test]
    fn encode_decode_roundtrip() {
        let s = ProductSpace::new(vec![3, 4, 2]);
        for i in 0..s.len() {
            assert_eq!(s.encode(&s.decode(i)), i);
        }
        assert_eq!(s.decode(1), vec![0, 0, 1]);
    }

    #[test]
    fn identical_levels_swap_with_probability_one() {
        let pi = vec![0.2, 0.3, 0.5];
        let c = FiniteChain::independent(&pi).unwrap();
        let p = pt_product_kernel(&[c.clone(), c], &[pi.clone(), pi.clone()]).unwrap();
        let big = product_distribution(&[pi.clone(), pi]);
        assert!(stationarity_residual(p.matrix(), &big) < 1e-12);
    }

    #[test]
    fn product_kernel_is_product_stationary() {
        let mut r = rng::stream(41, 0);
        let pis = [vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]];
        let chains: Vec<FiniteChain> = pis
            .iter()
            .map(|p| FiniteChain::metropolis(&random_symmetric_proposal(3, &mut r), p).unwrap())
            .collect();
        let p = pt_product_kernel(&chains, &pis).unwrap();
        let big = product_distribution(&pis);
        assert!(stationarity_residual(p.matrix(), &big) < 1e-10);
        let solved = stationary(&p).unwrap();
        let err: f64 = solved.iter().zip(&big).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn size_limit_enforced() {
        let pi = vec![0.1; 10];
        let c = FiniteChain::independent(&pi).unwrap();
        let levels = vec![c; 5];
        let targets = vec![pi; 5];
        assert!(matches!(pt_product_kernel(&levels, &targets), Err(Error::SizeLimit { .. })));
    }
}
