//! Exact and perturbed Markov chain Monte Carlo.
//!
//! The crate pairs continuous-state samplers (random-walk Metropolis,
//! Metropolis-adjusted Langevin, parallel tempering) with an exact
//! finite-state oracle, so that perturbation bounds relating a kernel `P`
//! and an approximation `P̂` can be checked as literal inequalities on
//! small chains and as scaling laws on discretized ones.
//!
//! * [`densities`]: log-targets and controlled perturbations of them.
//! * [`samplers`]: MH kernels, seeded chain simulation, parallel tempering.
//! * [`finite_oracle`]: stationary laws, spectral gaps, operator norms,
//!   divergences and drift constants of finite chains.
//! * [`diagnostics`]: autocorrelation times, ESS, Monte Carlo error bounds.
//! * [`inverse_problem`]: the predator–prey posterior with an RK2 forward
//!   model.
//! * [`runner`]: config-driven experiments behind the `pmcmc` binary.

// `!(x <= y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod densities;
pub mod diagnostics;
pub mod error;
pub mod finite_oracle;
pub mod inverse_problem;
pub mod io;
pub mod rng;
pub mod runner;
pub mod samplers;

pub use error::{Error, Result};
