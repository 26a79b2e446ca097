use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Cached, TransitionKernel};
use crate::densities::LogTarget;
use crate::error::{Error, Result};
use crate::rng;

/// Gaussian proposal families; both use covariance `2h·I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Proposal {
    RandomWalk { h: f64 },
    Langevin { h: f64 },
}

impl Proposal {
    pub fn step_size(&self) -> f64 {
        match *self {
            Proposal::RandomWalk { h } | Proposal::Langevin { h } => h,
        }
    }
}

impl fmt::Display for Proposal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proposal::RandomWalk { h } => write!(f, "rwm(h={h})"),
            Proposal::Langevin { h } => write!(f, "mala(h={h})"),
        }
    }
}

/// Metropolis–Hastings kernel `P(x,·) = α(x)δ_x + β(x,·)`.
#[derive(Clone, Debug)]
pub struct MHKernel {
    target: LogTarget,
    proposal: Proposal,
}

impl MHKernel {
    pub fn new(target: LogTarget, proposal: Proposal) -> Result<Self> {
        let h = proposal.step_size();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        Ok(Self { target, proposal })
    }

    pub fn random_walk(target: LogTarget, h: f64) -> Result<Self> {
        Self::new(target, Proposal::RandomWalk { h })
    }

    /// Targets without an analytic gradient fall back to finite differences.
    pub fn langevin(target: LogTarget, h: f64) -> Result<Self> {
        Self::new(target, Proposal::Langevin { h })
    }

    pub fn target(&self) -> &LogTarget {
        &self.target
    }

    pub fn proposal(&self) -> Proposal {
        self.proposal
    }

    pub fn descriptor(&self) -> String {
        format!("{} on {}", self.proposal, self.target.name())
    }

    fn h(&self) -> f64 {
        self.proposal.step_size()
    }

    fn drift(&self, gradient: Option<&[f64]>) -> Option<Vec<f64>> {
        match self.proposal {
            Proposal::RandomWalk { .. } => None,
            Proposal::Langevin { h } => gradient.map(|g| g.iter().map(|v| h * v).collect()),
        }
    }

    pub(crate) fn gradient_if_needed(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.proposal {
            Proposal::RandomWalk { .. } => None,
            Proposal::Langevin { .. } => Some(self.target.gradient(x)),
        }
    }

    /// Log proposal density `log R(x, y)` including its normalizer
    /// `(4πh)^{-d/2}`.
    pub fn log_proposal_density(&self, x: &[f64], y: &[f64]) -> f64 {
        let g = self.gradient_if_needed(x);
        self.log_q(x, g.as_deref(), y)
    }

    pub(crate) fn log_q(&self, x: &[f64], grad_x: Option<&[f64]>, y: &[f64]) -> f64 {
        let h = self.h();
        let d = x.len() as f64;
        let drift = self.drift(grad_x);
        let sq: f64 = match &drift {
            None => x.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum(),
            Some(m) => x
                .iter()
                .zip(y)
                .zip(m)
                .map(|((a, b), m)| (b - a - m).powi(2))
                .sum(),
        };
        -0.5 * d * (4.0 * std::f64::consts::PI * h).ln() - sq / (4.0 * h)
    }

    /// `min{1, π(y)R(y,x) / (π(x)R(x,y))}`; zero when `y` leaves the support.
    pub fn acceptance_prob(&self, x: &[f64], y: &[f64]) -> f64 {
        let cur = self.prepare_point(x.to_vec());
        let lp_y = self.target.log_density(y);
        let grad_y = if lp_y.is_finite() { self.gradient_if_needed(y) } else { None };
        let log_a = self.log_acceptance(&cur, y, lp_y, grad_y.as_deref());
        accept_probability(log_a)
    }

    fn prepare_point(&self, x: Vec<f64>) -> Cached<Vec<f64>> {
        let log_target = self.target.log_density(&x);
        let gradient = self.gradient_if_needed(&x);
        Cached {
            state: x,
            log_target,
            gradient,
        }
    }

    fn log_acceptance(
        &self,
        cur: &Cached<Vec<f64>>,
        y: &[f64],
        lp_y: f64,
        grad_y: Option<&[f64]>,
    ) -> f64 {
        if !lp_y.is_finite() {
            return f64::NEG_INFINITY;
        }
        let diff = lp_y - cur.log_target;
        match self.proposal {
            Proposal::RandomWalk { .. } => diff,
            Proposal::Langevin { .. } => {
                let Some(gy) = grad_y else {
                    return f64::NEG_INFINITY;
                };
                if gy.iter().any(|v| !v.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                diff + self.log_q(y, Some(gy), &cur.state)
                    - self.log_q(&cur.state, cur.gradient.as_deref(), y)
            }
        }
    }

    fn propose<R: Rng + ?Sized>(&self, cur: &Cached<Vec<f64>>, rng: &mut R) -> Vec<f64> {
        let scale = (2.0 * self.h()).sqrt();
        let drift = self.drift(cur.gradient.as_deref());
        cur.state
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let xi: f64 = rng.sample(StandardNormal);
                x + drift.as_ref().map_or(0.0, |m| m[i]) + scale * xi
            })
            .collect()
    }
}

/// `min{1, exp(log_a)}` with `-inf` and NaN mapped to 0.
pub(crate) fn accept_probability(log_a: f64) -> f64 {
    if log_a >= 0.0 {
        1.0
    } else if log_a.is_nan() {
        0.0
    } else {
        log_a.exp()
    }
}

impl TransitionKernel for MHKernel {
    type State = Vec<f64>;

    fn log_target(&self, x: &Vec<f64>) -> f64 {
        self.target.log_density(x)
    }

    fn prepare(&self, x: Vec<f64>) -> Result<Cached<Vec<f64>>> {
        if !self.target.in_support(&x) {
            return Err(Error::Domain(format!("initial state {x:?}")));
        }
        Ok(self.prepare_point(x))
    }

    fn prepare_with(&self, x: Vec<f64>, log_target: f64) -> Result<Cached<Vec<f64>>> {
        let gradient = self.gradient_if_needed(&x);
        Ok(Cached {
            state: x,
            log_target,
            gradient,
        })
    }

    fn transition<R: Rng + ?Sized>(&self, cur: &mut Cached<Vec<f64>>, rng: &mut R) -> Result<bool> {
        if let Some(g) = &cur.gradient {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at {:?}", cur.state)));
            }
        }
        let y = self.propose(cur, rng);
        let lp_y = self.target.log_density(&y);
        let u: f64 = rng.random();
        if let Proposal::Langevin { h } = self.proposal {
            // The reverse density is at most its normalizer, which bounds
            // log_a without the (costly) gradient at y. Rejecting when u is
            // above that bound gives exactly the same decision.
            let log_q_max = -0.5 * y.len() as f64 * (4.0 * std::f64::consts::PI * h).ln();
            let bound = lp_y - cur.log_target + log_q_max - self.log_q(&cur.state, cur.gradient.as_deref(), &y);
            if !lp_y.is_finite() || u >= accept_probability(bound) {
                return Ok(false);
            }
        }
        let grad_y = if lp_y.is_finite() { self.gradient_if_needed(&y) } else { None };
        let log_a = self.log_acceptance(cur, &y, lp_y, grad_y.as_deref());
        if u < accept_probability(log_a) {
            *cur = Cached {
                state: y,
                log_target: lp_y,
                gradient: grad_y,
            };
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

fn checked_step<R: Rng + ?Sized>(
    kernel: &MHKernel,
    x: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let mut cur = kernel.prepare(x.to_vec())?;
    let accepted = kernel.transition(&mut cur, rng)?;
    Ok((cur.state, accepted))
}

/// One random-walk Metropolis step, `x' = x + √(2h)ξ`.
pub fn rwm_step<R: Rng + ?Sized>(
    kernel: &MHKernel,
    x: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    if !matches!(kernel.proposal, Proposal::RandomWalk { .. }) {
        return Err(Error::InvalidArgument("rwm_step needs a random-walk kernel".into()));
    }
    checked_step(kernel, x, rng)
}

/// One MALA step, `x' = x + h∇log π(x) + √(2h)ξ` with MH correction.
pub fn mala_step<R: Rng + ?Sized>(
    kernel: &MHKernel,
    x: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    if !matches!(kernel.proposal, Proposal::Langevin { .. }) {
        return Err(Error::InvalidArgument("mala_step needs a Langevin kernel".into()));
    }
    checked_step(kernel, x, rng)
}

/// A seeded chain realization: `n` states recorded after each step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    dim: usize,
    states: Vec<f64>,
    accepted: Vec<bool>,
    pub seed: u64,
    pub kernel: String,
}

impl Trace {
    pub fn new(dim: usize, seed: u64, kernel: impl Into<String>) -> Self {
        Self {
            dim,
            states: Vec::new(),
            accepted: Vec::new(),
            seed,
            kernel: kernel.into(),
        }
    }

    pub fn push(&mut self, state: &[f64], accepted: bool) {
        debug_assert_eq!(state.len(), self.dim);
        self.states.extend_from_slice(state);
        self.accepted.push(accepted);
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// The series of coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.states().map(|s| s[j]).collect()
    }

    pub fn acceptance_count(&self) -> usize {
        self.accepted.iter().filter(|a| **a).count()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_count() as f64 / self.len() as f64
    }

    /// Per-step acceptance indicators as 0/1 values.
    pub fn acceptance_indicators(&self) -> Vec<f64> {
        self.accepted.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect()
    }

    /// Drop the first `n` states.
    pub fn discard(&mut self, n: usize) {
        let n = n.min(self.len());
        self.states.drain(..n * self.dim);
        self.accepted.drain(..n);
    }
}

/// Iterate `kernel` for `n` steps from `x0` using stream 0 of `seed`.
pub fn run_chain(kernel: &MHKernel, x0: &[f64], n: usize, seed: u64) -> Result<Trace> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain length must be >= 1".into()));
    }
    let mut rng = rng::stream(seed, 0);
    let mut cur = kernel.prepare(x0.to_vec())?;
    let mut trace = Trace::new(x0.len(), seed, kernel.descriptor());
    trace.states.reserve(n * x0.len());
    for _ in 0..n {
        let accepted = kernel.transition(&mut cur, &mut rng)?;
        trace.push(&cur.state, accepted);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::ess;
    use crate::densities::LogTarget;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn kernel_rejects_bad_step() {
        assert!(MHKernel::random_walk(LogTarget::standard_normal(1), 0.0).is_err());
        assert!(MHKernel::langevin(LogTarget::standard_normal(1), -1.0).is_err());
    }

    #[test]
    fn uniform_box_interior_proposals_always_accepted() {
        let t = LogTarget::uniform_box(vec![-100.0], vec![100.0]);
        let k = MHKernel::random_walk(t, 0.01).unwrap();
        let mut rng = rng::stream(3, 0);
        for _ in 0..1000 {
            let (_, acc) = rwm_step(&k, &[0.0], &mut rng).unwrap();
            assert!(acc);
        }
    }

    #[test]
    fn langevin_early_rejection_matches_full_acceptance() {
        // skewed target so that many proposals are rejected on the bound
        let t = LogTarget::new(2, |x| -x[0].powi(4) - 3.0 * x[1].powi(2))
            .with_gradient(|x| vec![-4.0 * x[0].powi(3), -6.0 * x[1]]);
        let k = MHKernel::langevin(t, 0.4).unwrap();
        let mut fast = rng::stream(8, 0);
        let mut slow = rng::stream(8, 0);
        let mut cur = k.prepare(vec![1.0, -0.5]).unwrap();
        for _ in 0..5000 {
            let x = cur.state.clone();
            let y = k.propose(&cur, &mut slow);
            let u: f64 = slow.random();
            let expected = u < k.acceptance_prob(&x, &y);
            assert_eq!(k.transition(&mut cur, &mut fast).unwrap(), expected);
            assert_eq!(cur.state, if expected { y } else { x });
        }
    }

    #[test]
    fn proposals_outside_box_rejected() {
        let t = LogTarget::uniform_box(vec![0.0], vec![1.0]);
        let k = MHKernel::random_walk(t, 0.5).unwrap();
        assert_eq!(k.acceptance_prob(&[0.5], &[1.5]), 0.0);
        assert_eq!(k.acceptance_prob(&[0.5], &[0.9]), 1.0);
    }

    #[test]
    fn mala_self_proposal_has_unit_acceptance() {
        let k = MHKernel::langevin(LogTarget::standard_normal(2), 0.3).unwrap();
        // the mean of the proposal from x is x + h∇log π(x); a proposal equal to x itself
        for x in [[0.0, 0.0], [1.0, -2.0], [0.3, 0.7]] {
            assert!((k.acceptance_prob(&x, &x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_kind_checked() {
        let t = LogTarget::standard_normal(1);
        let rw = MHKernel::random_walk(t.clone(), 0.1).unwrap();
        let la = MHKernel::langevin(t, 0.1).unwrap();
        let mut rng = rng::stream(0, 0);
        assert!(mala_step(&rw, &[0.0], &mut rng).is_err());
        assert!(rwm_step(&la, &[0.0], &mut rng).is_err());
    }

    #[test]
    fn mala_non_finite_gradient_is_numeric_error() {
        let t = LogTarget::new(1, |x| -x[0] * x[0]).with_gradient(|_| vec![f64::NAN]);
        let k = MHKernel::langevin(t, 0.1).unwrap();
        let mut rng = rng::stream(0, 0);
        assert!(matches!(mala_step(&k, &[0.0], &mut rng), Err(Error::Numeric(_))));
    }

    #[test]
    fn run_chain_basic_contracts() {
        let k = MHKernel::random_walk(LogTarget::standard_normal(1), 0.5).unwrap();
        let one = run_chain(&k, &[0.0], 1, 1).unwrap();
        assert_eq!(one.len(), 1);
        let a = run_chain(&k, &[0.0], 500, 99).unwrap();
        let b = run_chain(&k, &[0.0], 500, 99).unwrap();
        assert_eq!(a, b);
        assert!(run_chain(&k, &[0.0], 0, 1).is_err());
        assert!(a.acceptance_count() <= a.len());
    }

    #[test]
    fn run_chain_mean_within_mc_error() {
        let k = MHKernel::random_walk(LogTarget::standard_normal(1), 0.5).unwrap();
        let t = run_chain(&k, &[0.0], 100_000, 2024).unwrap();
        let xs = t.coordinate(0);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let e = ess(&xs).unwrap();
        assert!(mean.abs() <= 4.0 * sd / e.sqrt(), "mean {mean}, sd {sd}, ess {e}");
    }

    proptest! {
        #[test]
        fn acceptance_probability_in_unit_interval(
            x in -5.0f64..5.0, y in -5.0f64..5.0, h in 0.01f64..2.0
        ) {
            let t = LogTarget::standard_normal(1);
            for k in [MHKernel::random_walk(t.clone(), h).unwrap(), MHKernel::langevin(t.clone(), h).unwrap()] {
                let a = k.acceptance_prob(&[x], &[y]);
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }
}
