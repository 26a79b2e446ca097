use rand::Rng;

use super::{Cached, TransitionKernel};
use crate::error::{Error, Result};
use crate::finite_oracle::FiniteChain;

/// Sample a [`FiniteChain`] row by row. The target is the chain's
/// stationary law, supplied explicitly as log-probabilities.
#[derive(Clone, Debug)]
pub struct FiniteKernel {
    cumulative: Vec<Vec<f64>>,
    log_pi: Vec<f64>,
}

impl FiniteKernel {
    pub fn new(chain: &FiniteChain, pi: &[f64]) -> Result<Self> {
        if pi.len() != chain.n() {
            return Err(Error::DimensionMismatch {
                expected: chain.n(),
                got: pi.len(),
            });
        }
        let cumulative = (0..chain.n())
            .map(|i| {
                let mut acc = 0.0;
                chain
                    .row(i)
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            cumulative,
            log_pi: pi.iter().map(|p| p.ln()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.log_pi.len()
    }
}

impl TransitionKernel for FiniteKernel {
    type State = usize;

    fn log_target(&self, x: &usize) -> f64 {
        self.log_pi.get(*x).copied().unwrap_or(f64::NEG_INFINITY)
    }

    fn prepare(&self, x: usize) -> Result<Cached<usize>> {
        if x >= self.n() {
            return Err(Error::Domain(format!("state {x} of {}", self.n())));
        }
        Ok(Cached {
            state: x,
            log_target: self.log_pi[x],
            gradient: None,
        })
    }

    fn transition<R: Rng + ?Sized>(&self, cur: &mut Cached<usize>, rng: &mut R) -> Result<bool> {
        let row = &self.cumulative[cur.state];
        let u: f64 = rng.random::<f64>() * row[row.len() - 1];
        let next = row.partition_point(|c| *c <= u).min(row.len() - 1);
        let moved = next != cur.state;
        cur.state = next;
        cur.log_target = self.log_pi[next];
        Ok(moved)
    }
}
