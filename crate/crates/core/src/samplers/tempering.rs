use rand::Rng;

use super::mh::accept_probability;
use super::{Cached, MHKernel, Proposal, Trace, TransitionKernel};
use crate::densities::LogTarget;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Inverse temperatures `β_k = 1 + α^{-K} − α^{-k}`, `k = 0..=K`.
pub fn tempering_ladder(k: usize, alpha: f64) -> Result<Vec<f64>> {
    if k < 1 {
        return Err(Error::InvalidArgument("a ladder needs K >= 1".into()));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must exceed 1, got {alpha}")));
    }
    let top = alpha.powi(-(k as i32));
    Ok((0..=k).map(|j| 1.0 + top - alpha.powi(-(j as i32))).collect())
}

fn swap_log_ratio(lk_x: f64, lk_x1: f64, lk1_x: f64, lk1_x1: f64) -> f64 {
    if !(lk_x1.is_finite() && lk1_x.is_finite()) {
        return f64::NEG_INFINITY;
    }
    (lk_x1 + lk1_x) - (lk_x + lk1_x1)
}

/// Probability of exchanging `x` (at level k) with `x1` (at level k+1).
pub fn pt_swap_prob(pi_k: &LogTarget, pi_k1: &LogTarget, x: &[f64], x1: &[f64]) -> Result<f64> {
    for p in [x, x1] {
        if !pi_k.in_support(p) || !pi_k1.in_support(p) {
            return Err(Error::Domain(format!("{p:?}")));
        }
    }
    let log_a = swap_log_ratio(
        pi_k.log_density(x),
        pi_k.log_density(x1),
        pi_k1.log_density(x),
        pi_k1.log_density(x1),
    );
    Ok(accept_probability(log_a))
}

/// One rung of the ladder: a kernel targeting `π_k`, applied `steps` times.
#[derive(Clone, Debug)]
pub struct PTLevel<K> {
    pub kernel: K,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct PTConfig<K> {
    levels: Vec<PTLevel<K>>,
}

impl<K: TransitionKernel> PTConfig<K> {
    pub fn new(levels: Vec<PTLevel<K>>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidArgument("tempering needs at least two levels".into()));
        }
        if levels.iter().any(|l| l.steps == 0) {
            return Err(Error::InvalidArgument("every level needs t_k >= 1".into()));
        }
        Ok(Self { levels })
    }

    /// One step per level.
    pub fn with_kernels(kernels: Vec<K>) -> Result<Self> {
        Self::new(kernels.into_iter().map(|kernel| PTLevel { kernel, steps: 1 }).collect())
    }

    /// Index of the top level, i.e. the number of levels minus one.
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[PTLevel<K>] {
        &self.levels
    }
}

impl PTConfig<MHKernel> {
    /// Random-walk kernels with a shared step size on every target.
    pub fn random_walk(targets: Vec<LogTarget>, h: f64) -> Result<Self> {
        let kernels = targets
            .into_iter()
            .map(|t| MHKernel::new(t, Proposal::RandomWalk { h }))
            .collect::<Result<Vec<_>>>()?;
        Self::with_kernels(kernels)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SwapStats {
    pub attempts: Vec<u64>,
    pub accepts: Vec<u64>,
}

impl SwapStats {
    fn new(pairs: usize) -> Self {
        Self {
            attempts: vec![0; pairs],
            accepts: vec![0; pairs],
        }
    }

    pub fn rate(&self, k: usize) -> f64 {
        self.accepts[k] as f64 / self.attempts[k].max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PTState<S> {
    replicas: Vec<Cached<S>>,
    pub iteration: u64,
    pub swap_stats: SwapStats,
    /// Accepted level moves, per level.
    pub level_accepts: Vec<u64>,
}

impl<S: Clone> PTState<S> {
    pub fn new<K>(config: &PTConfig<K>, initial: Vec<S>) -> Result<Self>
    where
        K: TransitionKernel<State = S>,
    {
        if initial.len() != config.levels.len() {
            return Err(Error::DimensionMismatch {
                expected: config.levels.len(),
                got: initial.len(),
            });
        }
        let replicas = config
            .levels
            .iter()
            .zip(initial)
            .map(|(l, x)| l.kernel.prepare(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            replicas,
            iteration: 0,
            swap_stats: SwapStats::new(config.top()),
            level_accepts: vec![0; config.levels.len()],
        })
    }

    pub fn replica(&self, k: usize) -> &S {
        &self.replicas[k].state
    }

    pub fn replicas(&self) -> impl Iterator<Item = &S> {
        self.replicas.iter().map(|c| &c.state)
    }
}

/// Independent streams for every level plus one for the swap sub-step.
#[derive(Clone, Debug)]
pub struct PtRng {
    levels: Vec<StreamRng>,
    swap: StreamRng,
}

impl PtRng {
    pub fn new(seed: u64, n_levels: usize) -> Self {
        Self {
            levels: (0..n_levels).map(|k| rng::stream(seed, 1 + k as u64)).collect(),
            swap: rng::stream(seed, 0),
        }
    }
}

/// Advance every replica by its level kernel, then attempt one swap between
/// a uniformly chosen neighbouring pair. Returns the pair index when the
/// swap was accepted.
pub fn pt_step<K: TransitionKernel>(
    config: &PTConfig<K>,
    state: &mut PTState<K::State>,
    rng: &mut PtRng,
) -> Result<Option<usize>> {
    for (k, level) in config.levels.iter().enumerate() {
        for _ in 0..level.steps {
            if level.kernel.transition(&mut state.replicas[k], &mut rng.levels[k])? {
                state.level_accepts[k] += 1;
            }
        }
    }
    state.iteration += 1;

    let k = rng.swap.random_range(0..config.top());
    let u: f64 = rng.swap.random();
    let lower = &config.levels[k].kernel;
    let upper = &config.levels[k + 1].kernel;
    let x = &state.replicas[k];
    let x1 = &state.replicas[k + 1];
    let lk_x1 = lower.log_target(&x1.state);
    let lk1_x = upper.log_target(&x.state);
    let log_a = swap_log_ratio(x.log_target, lk_x1, lk1_x, x1.log_target);
    state.swap_stats.attempts[k] += 1;
    if u < accept_probability(log_a) {
        let new_lower = lower.prepare_with(x1.state.clone(), lk_x1)?;
        let new_upper = upper.prepare_with(x.state.clone(), lk1_x)?;
        state.replicas[k] = new_lower;
        state.replicas[k + 1] = new_upper;
        state.swap_stats.accepts[k] += 1;
        Ok(Some(k))
    } else {
        Ok(None)
    }
}

/// Per-level traces of equal length plus swap statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct PTTrace {
    pub levels: Vec<Trace>,
    pub swap_stats: SwapStats,
}

impl PTTrace {
    /// Samples of the top level, `π_K`.
    pub fn target(&self) -> &Trace {
        self.levels.last().expect("at least two levels")
    }
}

/// Run `n` tempering iterations over continuous states.
pub fn run_pt<K>(config: &PTConfig<K>, initial: Vec<Vec<f64>>, n: usize, seed: u64) -> Result<PTTrace>
where
    K: TransitionKernel<State = Vec<f64>>,
{
    if n == 0 {
        return Err(Error::InvalidArgument("chain length must be >= 1".into()));
    }
    let mut state = PTState::new(config, initial)?;
    let mut rng = PtRng::new(seed, config.levels.len());
    let mut levels: Vec<Trace> = state
        .replicas()
        .enumerate()
        .map(|(k, x)| Trace::new(x.len(), seed, format!("pt level {k}")))
        .collect();
    let mut prev = state.level_accepts.clone();
    for _ in 0..n {
        pt_step(config, &mut state, &mut rng)?;
        for (k, trace) in levels.iter_mut().enumerate() {
            trace.push(state.replica(k), state.level_accepts[k] > prev[k]);
        }
        prev.clone_from(&state.level_accepts);
    }
    Ok(PTTrace {
        levels,
        swap_stats: state.swap_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_oracle::FiniteChain;
    use crate::samplers::FiniteKernel;

    #[test]
    fn ladder_examples() {
        let b = tempering_ladder(4, 1.3).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b[4], 1.0);
        // 1.3^-4 = 1/2.8561
        assert!((b[0] - 0.350_127_796_645_775_65).abs() < 1e-15);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(tempering_ladder(1, 2.0).unwrap(), vec![0.5, 1.0]);
        assert!(tempering_ladder(0, 2.0).is_err());
        assert!(tempering_ladder(3, 1.0).is_err());
    }

    #[test]
    fn swap_prob_examples() {
        let a = LogTarget::isotropic_gaussian(1, 1.0);
        let b = LogTarget::isotropic_gaussian(1, 2.0);
        assert_eq!(pt_swap_prob(&a, &a, &[0.3], &[-2.0]).unwrap(), 1.0);
        assert_eq!(pt_swap_prob(&a, &b, &[1.7], &[1.7]).unwrap(), 1.0);
        // log π_k(1) + log π_{k+1}(0) − log π_k(0) − log π_{k+1}(1) = −1/2 + 1/4
        let expected = (-0.5f64 + 0.25).exp();
        assert!((pt_swap_prob(&a, &b, &[0.0], &[1.0]).unwrap() - expected).abs() < 1e-15);
        let boxed = LogTarget::uniform_box(vec![0.0], vec![1.0]);
        assert!(pt_swap_prob(&boxed, &boxed, &[0.5], &[2.0]).is_err());
    }

    #[test]
    fn identical_levels_always_swap() {
        let t = LogTarget::standard_normal(1);
        let cfg = PTConfig::random_walk(vec![t.clone(), t], 0.5).unwrap();
        let out = run_pt(&cfg, vec![vec![0.0], vec![1.0]], 5000, 3).unwrap();
        assert_eq!(out.swap_stats.attempts[0], 5000);
        assert_eq!(out.swap_stats.accepts[0], 5000);
        assert_eq!(out.levels[0].len(), out.levels[1].len());
    }

    #[test]
    fn frozen_levels_only_permute() {
        let frozen = FiniteChain::new(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let pis = [[0.2, 0.3, 0.5], [0.5, 0.3, 0.2], [0.3, 0.4, 0.3]];
        let cfg = PTConfig::with_kernels(
            pis.iter().map(|p| FiniteKernel::new(&frozen, p).unwrap()).collect(),
        )
        .unwrap();
        let mut state = PTState::new(&cfg, vec![0, 1, 2]).unwrap();
        let mut rng = PtRng::new(5, 3);
        for _ in 0..2000 {
            pt_step(&cfg, &mut state, &mut rng).unwrap();
            let mut seen: Vec<usize> = state.replicas().copied().collect();
            seen.sort_unstable();
            assert_eq!(seen, vec![0, 1, 2]);
        }
        assert_eq!(state.level_accepts, vec![0, 0, 0]);
        assert!(state.swap_stats.accepts.iter().sum::<u64>() > 0);
    }

    #[test]
    fn run_pt_is_deterministic() {
        let targets: Vec<LogTarget> = tempering_ladder(2, 1.5)
            .unwrap()
            .into_iter()
            .map(|b| LogTarget::isotropic_gaussian(2, 1.0 / b))
            .collect();
        let cfg = PTConfig::random_walk(targets, 0.4).unwrap();
        let init = vec![vec![0.0, 0.0]; 3];
        let a = run_pt(&cfg, init.clone(), 300, 17).unwrap();
        let b = run_pt(&cfg, init, 300, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let t = LogTarget::standard_normal(1);
        assert!(PTConfig::random_walk(vec![t.clone()], 0.1).is_err());
        let k = MHKernel::random_walk(t, 0.1).unwrap();
        assert!(PTConfig::new(vec![
            PTLevel { kernel: k.clone(), steps: 1 },
            PTLevel { kernel: k, steps: 0 }
        ])
        .is_err());
    }
}
