//! Metropolis–Hastings kernels and the parallel-tempering sampler.

mod finite;
mod mh;
mod tempering;

pub use finite::FiniteKernel;
pub use mh::{mala_step, run_chain, rwm_step, MHKernel, Proposal, Trace};
pub use tempering::{
    pt_step, pt_swap_prob, run_pt, tempering_ladder, PTConfig, PTLevel, PTState, PTTrace, PtRng,
    SwapStats,
};

pub(crate) use mh::accept_probability;

use rand::Rng;

use crate::error::Result;

/// A state together with the quantities a kernel already evaluated there.
#[derive(Clone, Debug, PartialEq)]
pub struct Cached<S> {
    pub state: S,
    pub log_target: f64,
    pub gradient: Option<Vec<f64>>,
}

/// A Markov kernel that leaves `exp(log_target)` invariant.
pub trait TransitionKernel {
    type State: Clone;

    fn log_target(&self, x: &Self::State) -> f64;

    /// Evaluate everything the kernel needs at `x`.
    fn prepare(&self, x: Self::State) -> Result<Cached<Self::State>>;

    /// Like [`prepare`](Self::prepare) when `log_target(x)` is already known.
    fn prepare_with(&self, x: Self::State, _log_target: f64) -> Result<Cached<Self::State>> {
        self.prepare(x)
    }

    /// Advance `cur` by one step; returns whether a proposal was accepted.
    fn transition<R: Rng + ?Sized>(&self, cur: &mut Cached<Self::State>, rng: &mut R)
        -> Result<bool>;
}
