//! Output analysis for simulated chains.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite_oracle::{tail_rate, tv_dist, FiniteChain};
use crate::samplers::Trace;

/// Shortest series accepted by [`autocorr_time`].
pub const MIN_SERIES_LEN: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IATResult {
    pub tau: f64,
    /// Last lag included in the sum.
    pub window: usize,
    pub ess: f64,
    /// Autocovariances at lags `0..=window` (biased, divided by `n`).
    pub autocovariances: Vec<f64>,
}

/// Biased autocovariances `γ(t) = n⁻¹ Σ (x_i − x̄)(x_{i+t} − x̄)` for all lags,
/// by zero-padded FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf.iter_mut().for_each(|z| *z = Complex::new(z.norm_sqr(), 0.0));
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / (len as f64 * n as f64);
    buf[..n].iter().map(|z| z.re * scale).collect()
}

/// Integrated autocorrelation time with Geyer's initial positive sequence
/// window: lag pairs `ρ(2m) + ρ(2m+1)` are summed until the first
/// non-positive pair.
pub fn autocorr_time(series: &[f64]) -> Result<IATResult> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::InvalidArgument(format!(
            "series of length {n} is shorter than {MIN_SERIES_LEN}"
        )));
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite value at index {i}")));
    }
    let acov = autocovariance(series);
    if !(acov[0] > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    let rho = |t: usize| acov[t] / acov[0];
    let max_lag = (n - 1) / 2;
    let mut sum = 0.0;
    let mut window = 0;
    let mut m = 0;
    while 2 * m < max_lag {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        window = 2 * m + 1;
        m += 1;
    }
    // Σ_{m<M} Γ_m = 1 + Σ_{t=1}^{W} ρ(t), hence τ = 2Σ Γ_m − 1.
    let tau = (2.0 * sum - 1.0).max(0.0);
    let tau = if window == 0 { 1.0 } else { tau };
    Ok(IATResult {
        tau,
        window,
        ess: n as f64 / tau.max(1.0),
        autocovariances: acov[..=window].to_vec(),
    })
}

pub fn ess(series: &[f64]) -> Result<f64> {
    Ok(autocorr_time(series)?.ess)
}

/// One IAT per coordinate of a multivariate trace.
pub fn coordinate_iat(trace: &Trace) -> Result<Vec<IATResult>> {
    (0..trace.dim()).map(|j| autocorr_time(&trace.coordinate(j))).collect()
}

/// `2·var_f / (M·(1 − √(1 − κ̂)))`.
pub fn mc_error_bound(kappa_hat: f64, var_f: f64, m: usize) -> Result<f64> {
    if !(kappa_hat > 0.0 && kappa_hat <= 1.0) {
        return Err(Error::InvalidArgument(format!("kappa_hat = {kappa_hat} not in (0, 1]")));
    }
    if !(var_f >= 0.0) || m == 0 {
        return Err(Error::InvalidArgument("need var_f ≥ 0 and M ≥ 1".into()));
    }
    Ok(2.0 * var_f / (m as f64 * (1.0 - (1.0 - kappa_hat).sqrt())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TvDecay {
    /// `‖δ_{x0} Pⁿ − π‖_TV` for `n = 1..=n_max`.
    pub distances: Vec<f64>,
    pub rate: Option<f64>,
}

/// Exact total-variation decay from a point mass.
pub fn tv_decay(chain: &FiniteChain, x0: usize, n_max: usize) -> Result<TvDecay> {
    if x0 >= chain.n() {
        return Err(Error::InvalidArgument(format!("state {x0} out of range")));
    }
    let pi = chain.stationary_or_solve()?;
    let mut row = vec![0.0; chain.n()];
    row[x0] = 1.0;
    let mut distances = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        row = (nalgebra::DVector::from_vec(row).transpose() * chain.matrix())
            .iter()
            .copied()
            .collect();
        distances.push(tv_dist(&row, &pi)?);
    }
    let rate = tail_rate(&distances);
    Ok(TvDecay { distances, rate })
}

/// Default burn-in: ten pilot IATs, the pilot being the first 10% of the
/// series (at least [`MIN_SERIES_LEN`] points). Capped at half the series.
pub fn default_burn_in(series: &[f64]) -> Result<usize> {
    let pilot = (series.len() / 10).max(MIN_SERIES_LEN).min(series.len());
    let tau = match autocorr_time(&series[..pilot]) {
        Ok(r) => r.tau,
        // a stuck pilot means the chain has not started moving yet
        Err(Error::DegenerateSeries) => pilot as f64 / 10.0,
        Err(e) => return Err(e),
    };
    Ok(((10.0 * tau).ceil() as usize).min(series.len() / 2))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_t |F_a(t) − F_b(t)|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, 0);
        let sd = (1.0 - phi * phi).sqrt();
        let mut x: f64 = r.sample(StandardNormal);
        (0..n)
            .map(|_| {
                x = phi * x + sd * r.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let xs = ar1(0.3, 257, 1);
        let fast = autocovariance(&xs);
        let n = xs.len();
        let m = xs.iter().sum::<f64>() / n as f64;
        for t in [0, 1, 5, 100, 256] {
            let slow: f64 = (0..n - t).map(|i| (xs[i] - m) * (xs[i + t] - m)).sum::<f64>() / n as f64;
            assert!((fast[t] - slow).abs() < 1e-12, "lag {t}");
        }
    }

    #[test]
    fn iid_tau_is_one() {
        let r = autocorr_time(&ar1(0.0, 100_000, 2)).unwrap();
        assert!((r.tau - 1.0).abs() < 0.1, "{}", r.tau);
        assert!(r.window < 50_000);
    }

    #[test]
    fn ar1_tau() {
        let r = autocorr_time(&ar1(0.5, 1_000_000, 3)).unwrap();
        assert!((r.tau - 3.0).abs() < 0.15, "{}", r.tau);
    }

    #[test]
    fn ess_examples() {
        let e = ess(&ar1(0.0, 10_000, 4)).unwrap();
        assert!((e / 1e4 - 1.0).abs() < 0.1, "{e}");
        let e = ess(&ar1(0.5, 300_000, 5)).unwrap();
        assert!((e / 1e5 - 1.0).abs() < 0.1, "{e}");
        let e = ess(&ar1(0.0, 100, 6)).unwrap();
        assert!(e <= 100.0);
    }

    #[test]
    fn degenerate_and_short_series() {
        assert!(matches!(autocorr_time(&[2.0; 500]), Err(Error::DegenerateSeries)));
        assert!(autocorr_time(&[1.0; 99]).is_err());
    }

    #[test]
    fn mc_error_bound_examples() {
        assert!((mc_error_bound(1.0, 1.0, 10).unwrap() - 0.2).abs() < 1e-15);
        assert!((mc_error_bound(0.19, 1.0, 100).unwrap() - 0.2).abs() < 1e-14);
        assert_eq!(mc_error_bound(0.5, 0.0, 7).unwrap(), 0.0);
        assert!(mc_error_bound(0.0, 1.0, 7).is_err());
    }

    #[test]
    fn tv_decay_examples() {
        let c = FiniteChain::independent(&[0.3, 0.7]).unwrap();
        assert!(tv_decay(&c, 0, 3).unwrap().distances[0] < 1e-15);
        let c = FiniteChain::two_state(0.1, 0.1).unwrap();
        let d = tv_decay(&c, 0, 60).unwrap();
        assert!((d.rate.unwrap() - 0.8).abs() < 1e-3);
        assert_eq!(tv_decay(&c, 0, 1).unwrap().rate, None);
        assert_eq!(tv_decay(&c, 0, 1).unwrap().distances.len(), 1);
    }

    #[test]
    fn ks_distance_cases() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        assert!((ks_distance(&[0.0, 2.0], &[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn burn_in_is_ten_pilot_taus() {
        let xs = ar1(0.5, 100_000, 7);
        let b = default_burn_in(&xs).unwrap();
        assert!((25..=35).contains(&b), "{b}");
    }
}
