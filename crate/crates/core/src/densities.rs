//! Unnormalized log-densities and controlled perturbations of them.
//!
//! A [`LogTarget`] is an immutable, cheaply clonable handle around a
//! log-density closure. Everything downstream (MH kernels, tempering
//! ladders, grid discretizations) only ever consumes log-density
//! *differences*, so targets are free to drop normalizing constants.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Step used by the finite-difference gradient fallback.
pub const FD_GRADIENT_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    Everywhere,
    /// Closed axis-aligned box.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Support {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Support::Everywhere => x.iter().all(|v| v.is_finite()),
            Support::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }

    /// Product of the box side lengths; `None` for unbounded support.
    pub fn volume(&self) -> Option<f64> {
        match self {
            Support::Everywhere => None,
            Support::Box { lower, upper } => {
                Some(lower.iter().zip(upper).map(|(lo, hi)| hi - lo).product())
            }
        }
    }
}

/// Unnormalized target density `log π` with optional analytic gradient.
#[derive(Clone)]
pub struct LogTarget {
    dim: usize,
    log_density: LogDensityFn,
    gradient: Option<GradientFn>,
    support: Support,
    name: String,
}

impl fmt::Debug for LogTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogTarget")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl LogTarget {
    pub fn new<F>(dim: usize, log_density: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(dim > 0, "a target needs at least one dimension");
        Self {
            dim,
            log_density: Arc::new(log_density),
            gradient: None,
            support: Support::Everywhere,
            name: "custom".to_string(),
        }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_support(mut self, support: Support) -> Self {
        if let Support::Box { lower, upper } = &support {
            assert_eq!(lower.len(), self.dim);
            assert_eq!(upper.len(), self.dim);
            assert!(lower.iter().zip(upper).all(|(lo, hi)| lo < hi));
        }
        self.support = support;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.support.contains(x)
    }

    /// `log π(x)` up to an additive constant; `-inf` outside the support.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        (self.log_density)(x)
    }

    /// Analytic gradient when available, otherwise central finite
    /// differences with step [`FD_GRADIENT_STEP`].
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => central_difference(|p| self.log_density(p), x, FD_GRADIENT_STEP),
        }
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard_normal(dim: usize) -> Self {
        Self::isotropic_gaussian(dim, 1.0)
    }

    pub fn isotropic_gaussian(dim: usize, variance: f64) -> Self {
        assert!(variance > 0.0);
        Self::new(dim, move |x| -0.5 * x.iter().map(|v| v * v).sum::<f64>() / variance)
            .with_gradient(move |x| x.iter().map(|v| -v / variance).collect())
            .named(format!("gaussian(var={variance})"))
    }

    /// Uniform density on a closed box, with zero gradient inside.
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let dim = lower.len();
        Self::new(dim, |_| 0.0)
            .with_gradient(move |_| vec![0.0; dim])
            .with_support(Support::Box { lower, upper })
            .named("uniform-box")
    }

    /// Standard normal restricted to a box.
    pub fn truncated_normal(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self::standard_normal(lower.len())
            .with_support(Support::Box { lower, upper })
            .named("truncated-normal")
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `log π(y) − log π(x)`.
pub fn log_ratio(target: &LogTarget, x: &[f64], y: &[f64]) -> Result<f64> {
    for p in [x, y] {
        if !target.in_support(p) {
            return Err(Error::Domain(format!("{p:?} not in support of {}", target.name())));
        }
    }
    Ok(target.log_density(y) - target.log_density(x))
}

/// A bounded function with values in `[-1, 1]` used to shift a log-density.
#[derive(Clone)]
pub struct Bump {
    value: LogDensityFn,
    gradient: Option<GradientFn>,
    gradient_bound: Option<f64>,
}

impl fmt::Debug for Bump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bump")
            .field("gradient_bound", &self.gradient_bound)
            .finish_non_exhaustive()
    }
}

impl Bump {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: None,
            gradient_bound: None,
        }
    }

    /// Attach `∇bump` together with a bound on `sup ‖∇bump‖`.
    pub fn with_gradient<G>(mut self, gradient: G, sup_norm: f64) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self.gradient_bound = Some(sup_norm);
        self
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c).with_gradient(|x| vec![0.0; x.len()], 0.0)
    }

    /// `sin(x[coord])`.
    pub fn sin_coordinate(coord: usize) -> Self {
        Self::new(move |x| x[coord].sin()).with_gradient(
            move |x| {
                let mut g = vec![0.0; x.len()];
                g[coord] = x[coord].cos();
                g
            },
            1.0,
        )
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn negated(&self) -> Self {
        let value = Arc::clone(&self.value);
        let gradient = self.gradient.clone();
        Self {
            value: Arc::new(move |x| -value(x)),
            gradient: gradient.map(|g| -> GradientFn {
                Arc::new(move |x| g(x).into_iter().map(|v| -v).collect())
            }),
            gradient_bound: self.gradient_bound,
        }
    }
}

/// A base target together with its controlled perturbation.
#[derive(Clone, Debug)]
pub struct PerturbedPair {
    pub base: LogTarget,
    pub perturbed: LogTarget,
    /// Bound on `sup |log π − log π̂|` up to normalization.
    pub eps_log: f64,
    /// Bound on `sup ‖∇log π − ∇log π̂‖`, when known.
    pub eps_grad: Option<f64>,
}

/// Build `log π̂ = log π + eps · bump`.
pub fn make_perturbed(base: &LogTarget, bump: &Bump, eps: f64) -> Result<PerturbedPair> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be finite and >= 0, got {eps}")));
    }
    let base_fn = Arc::clone(&base.log_density);
    let bump_fn = Arc::clone(&bump.value);
    let mut perturbed = LogTarget {
        dim: base.dim,
        log_density: Arc::new(move |x| base_fn(x) + eps * bump_fn(x)),
        gradient: None,
        support: base.support.clone(),
        name: format!("{}+{eps}*bump", base.name),
    };
    let mut eps_grad = None;
    if let (Some(bg), Some(pg)) = (&base.gradient, &bump.gradient) {
        let (bg, pg) = (Arc::clone(bg), Arc::clone(pg));
        perturbed.gradient = Some(Arc::new(move |x| {
            bg(x).into_iter().zip(pg(x)).map(|(a, b)| a + eps * b).collect()
        }));
        eps_grad = bump.gradient_bound.map(|b| eps * b);
    }
    Ok(PerturbedPair {
        base: base.clone(),
        perturbed,
        eps_log: eps,
        eps_grad,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioBoundReport {
    /// Normalization offset removed before measuring deviations.
    pub offset: f64,
    pub max_deviation: f64,
    pub eps_log: f64,
    pub pass: bool,
}

/// Check `π/π̂ ∈ [e^{-eps}, e^{eps}]` on a sample after removing the
/// unknown normalization offset. The offset is the mid-range of the
/// sampled log-differences, which minimizes the maximal deviation.
pub fn verify_ratio_bound(pair: &PerturbedPair, points: &[Vec<f64>]) -> Result<RatioBoundReport> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points to check".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        if !pair.base.in_support(p) || !pair.perturbed.in_support(p) {
            return Err(Error::Domain(format!("{p:?}")));
        }
        let d = pair.perturbed.log_density(p) - pair.base.log_density(p);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let offset = 0.5 * (lo + hi);
    let max_deviation = 0.5 * (hi - lo);
    Ok(RatioBoundReport {
        offset,
        max_deviation,
        eps_log: pair.eps_log,
        pass: max_deviation <= pair.eps_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_1d(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
            .collect()
    }

    #[test]
    fn log_ratio_examples() {
        let t = LogTarget::standard_normal(1);
        assert_eq!(log_ratio(&t, &[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(log_ratio(&t, &[0.0], &[1.0]).unwrap(), -0.5);
        let u = LogTarget::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert_eq!(log_ratio(&u, &[0.2, 0.3], &[0.9, 0.1]).unwrap(), 0.0);
        assert!(matches!(log_ratio(&u, &[0.2, 0.3], &[1.5, 0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn outside_box_is_neg_infinity() {
        let t = LogTarget::truncated_normal(vec![-1.0], vec![1.0]);
        assert_eq!(t.log_density(&[1.5]), f64::NEG_INFINITY);
        assert!(t.log_density(&[0.5]).is_finite());
    }

    #[test]
    fn zero_bump_leaves_base_unchanged() {
        let base = LogTarget::standard_normal(2);
        let pair = make_perturbed(&base, &Bump::zero(), 0.1).unwrap();
        for p in grid_1d(-3.0, 3.0, 50) {
            let x = [p[0], 0.5 * p[0]];
            assert_eq!(pair.perturbed.log_density(&x), base.log_density(&x));
        }
    }

    #[test]
    fn sin_bump_bounded_by_eps() {
        let base = LogTarget::standard_normal(2);
        let pair = make_perturbed(&base, &Bump::sin_coordinate(0), 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let x = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            worst = worst.max((pair.perturbed.log_density(&x) - base.log_density(&x)).abs());
        }
        assert!(worst <= 0.05);
        assert_eq!(pair.eps_grad, Some(0.05));
    }

    #[test]
    fn constant_bump_cancels_in_ratios() {
        let base = LogTarget::standard_normal(1);
        let pair = make_perturbed(&base, &Bump::constant(1.0), 0.2).unwrap();
        let pts = grid_1d(-2.0, 2.0, 21);
        for x in &pts {
            for y in &pts {
                let a = log_ratio(&base, x, y).unwrap();
                let b = log_ratio(&pair.perturbed, x, y).unwrap();
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn negative_eps_rejected() {
        let base = LogTarget::standard_normal(1);
        assert!(matches!(
            make_perturbed(&base, &Bump::zero(), -0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn ratio_bound_examples() {
        let base = LogTarget::standard_normal(1);
        let pts = grid_1d(-5.0, 5.0, 1000);

        let pair = make_perturbed(&base, &Bump::sin_coordinate(0), 0.0).unwrap();
        let r = verify_ratio_bound(&pair, &pts).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(r.pass);

        let pair = make_perturbed(&base, &Bump::sin_coordinate(0), 0.1).unwrap();
        assert!(verify_ratio_bound(&pair, &pts).unwrap().pass);

        let mut lying = make_perturbed(&base, &Bump::sin_coordinate(0), 0.5).unwrap();
        lying.eps_log = 0.1;
        let r = verify_ratio_bound(&lying, &pts).unwrap();
        assert!(!r.pass);
        assert!(r.max_deviation > 0.45);
    }

    #[test]
    fn ratio_bound_rejects_out_of_support() {
        let base = LogTarget::truncated_normal(vec![-1.0], vec![1.0]);
        let pair = make_perturbed(&base, &Bump::zero(), 0.1).unwrap();
        assert!(verify_ratio_bound(&pair, &[vec![2.0]]).is_err());
        assert!(verify_ratio_bound(&pair, &[]).is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let base = LogTarget::standard_normal(3);
        let pair = make_perturbed(&base, &Bump::sin_coordinate(1), 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for target in [&base, &pair.perturbed] {
            assert!(target.has_analytic_gradient());
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                let g = target.gradient(&x);
                let fd = central_difference(|p| target.log_density(p), &x, 1e-6);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn fallback_gradient_is_finite_difference() {
        let t = LogTarget::new(2, |x| -(x[0] * x[0] + 3.0 * x[1] * x[1]));
        let g = t.gradient(&[0.5, -1.0]);
        assert!((g[0] + 1.0).abs() < 1e-8);
        assert!((g[1] - 6.0).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn log_ratio_antisymmetric(x in -20.0f64..20.0, y in -20.0f64..20.0) {
            let t = LogTarget::isotropic_gaussian(1, 2.5);
            let a = log_ratio(&t, &[x], &[y]).unwrap();
            let b = log_ratio(&t, &[y], &[x]).unwrap();
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn negated_bump_recovers_base(x in -10.0f64..10.0, eps in 0.0f64..1.0) {
            let base = LogTarget::standard_normal(1);
            let bump = Bump::sin_coordinate(0);
            let there = make_perturbed(&base, &bump, eps).unwrap();
            let back = make_perturbed(&there.perturbed, &bump.negated(), eps).unwrap();
            let err = (back.perturbed.log_density(&[x]) - base.log_density(&[x])).abs();
            prop_assert!(err <= 1e-12 * base.log_density(&[x]).abs().max(1.0));
        }
    }
}
