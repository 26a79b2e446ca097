use super::{check_len, FiniteChain};
use crate::error::{Error, Result};

/// Drift pair `(λ, L)` with `PV ≤ λV + L` at every state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftFit {
    pub lambda: f64,
    pub l: f64,
}

fn check_v(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(*x >= 1.0)) {
        Some(i) => Err(Error::InvalidArgument(format!("V[{i}] = {} < 1", v[i]))),
        None => Ok(()),
    }
}

/// Smallest `λ ≥ 0` with `PV ≤ λV + l` everywhere.
pub fn drift_rate_at(chain: &FiniteChain, v: &[f64], l: f64) -> Result<f64> {
    check_len(chain.n(), v.len())?;
    check_v(v)?;
    let pv = chain.apply(v);
    Ok(pv
        .iter()
        .zip(v)
        .map(|(p, w)| (p - l) / w)
        .fold(0.0, f64::max))
}

/// Drift condition with the constant anchored at the stationary mean
/// `L₀ = πV`.
///
/// On a finite space any `V` satisfies the drift inequality with `λ = 0`
/// and `L = max PV`, so a canonical constant is needed for `λ` to mean
/// anything. Since `π(PV) = πV`, no `L < (1 − λ)πV` is ever feasible;
/// anchoring at `πV` gives `λ = max(0, max_i ((PV)_i − πV)/V_i)` and then
/// `L = max_i ((PV)_i − λV_i)₊ ≤ πV`.
pub fn lyapunov_fit(chain: &FiniteChain, v: &[f64]) -> Result<DriftFit> {
    check_len(chain.n(), v.len())?;
    check_v(v)?;
    let pi = chain.stationary_or_solve()?;
    let pi_v: f64 = pi.iter().zip(v).map(|(p, w)| p * w).sum();
    let lambda = drift_rate_at(chain, v, pi_v)?;
    let pv = chain.apply(v);
    let l = pv
        .iter()
        .zip(v)
        .map(|(p, w)| (p - lambda * w).max(0.0))
        .fold(0.0, f64::max);
    Ok(DriftFit { lambda, l })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicityRate {
    /// `r_n = max_{x≠y} ‖δ_x Pⁿ − δ_y Pⁿ‖_V / d_V(x, y)` for `n = 1..=n_max`.
    pub ratios: Vec<f64>,
    /// Fitted geometric rate; `None` when there is nothing to fit.
    pub rate: Option<f64>,
}

/// Ratios below this are treated as exact coupling (rounding noise).
const COUPLED: f64 = 1e-13;

/// Geometric rate `exp(slope)` of a positive decaying sequence `r_1, r_2, …`
/// fitted by least squares over the tail half of its resolvable prefix.
pub(crate) fn tail_rate(seq: &[f64]) -> Option<f64> {
    let first = *seq.first()?;
    if first <= COUPLED {
        return Some(0.0);
    }
    let usable = seq.iter().take_while(|r| **r > COUPLED).count();
    if usable < 2 {
        return if seq.len() >= 2 { Some(0.0) } else { None };
    }
    let start = usable / 2;
    let xs: Vec<f64> = (start..usable).map(|n| (n + 1) as f64).collect();
    let ys: Vec<f64> = seq[start..usable].iter().map(|r| r.ln()).collect();
    let slope = if xs.len() == 1 {
        ys[0] - seq[start - 1].ln()
    } else {
        least_squares_slope(&xs, &ys)
    };
    Some(slope.exp())
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Geometric ergodicity rate under `d_V` by exact matrix powers.
pub fn ergodicity_rate(chain: &FiniteChain, v: &[f64], n_max: usize) -> Result<ErgodicityRate> {
    check_len(chain.n(), v.len())?;
    check_v(v)?;
    let n = chain.n();
    let p = chain.matrix();
    let mut power = p.clone();
    let mut ratios = Vec::with_capacity(n_max);
    for step in 1..=n_max {
        if step > 1 {
            power = &power * p;
        }
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                let d: f64 = (0..n).map(|z| (power[(x, z)] - power[(y, z)]).abs() * v[z]).sum();
                worst = worst.max(d / (v[x] + v[y]));
            }
        }
        ratios.push(worst);
    }
    let rate = tail_rate(&ratios);
    Ok(ErgodicityRate { ratios, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_oracle::testing::random_chain;
    use crate::rng;

    #[test]
    fn constant_v_gives_zero_lambda() {
        let c = FiniteChain::two_state(0.2, 0.4).unwrap();
        let fit = lyapunov_fit(&c, &[1.0, 1.0]).unwrap();
        assert_eq!(fit, DriftFit { lambda: 0.0, l: 1.0 });
    }

    #[test]
    fn independent_resampling_drift() {
        let pi = [0.2, 0.5, 0.3];
        let v = [1.0, 2.0, 4.0];
        let c = FiniteChain::independent(&pi).unwrap();
        let fit = lyapunov_fit(&c, &v).unwrap();
        let pi_v = 0.2 + 1.0 + 1.2;
        assert!(fit.lambda.abs() < 1e-15);
        assert!((fit.l - pi_v).abs() < 1e-14);
    }

    #[test]
    fn two_state_drift_checked_exhaustively() {
        let c = FiniteChain::two_state(0.2, 0.4).unwrap();
        let v = [1.0, 2.0];
        let fit = lyapunov_fit(&c, &v).unwrap();
        // PV = (1.2, 1.6), πV = 4/3: λ = max((1.2-4/3)/1, (1.6-4/3)/2) = 2/15
        assert!((fit.lambda - 2.0 / 15.0).abs() < 1e-14);
        let pv = [1.2, 1.6];
        for i in 0..2 {
            assert!(pv[i] <= fit.lambda * v[i] + fit.l + 1e-14);
        }
        assert!(pv.iter().zip(&v).any(|(p, w)| (p - fit.lambda * w - fit.l).abs() < 1e-14));
    }

    #[test]
    fn independent_resampling_couples_in_one_step() {
        let c = FiniteChain::independent(&[0.1, 0.6, 0.3]).unwrap();
        let r = ergodicity_rate(&c, &[1.0, 1.0, 1.0], 5).unwrap();
        assert!(r.ratios[0] < 1e-15);
        assert_eq!(r.rate, Some(0.0));
    }

    #[test]
    fn two_state_rate_is_eigenvalue() {
        let c = FiniteChain::two_state(0.1, 0.1).unwrap();
        let r = ergodicity_rate(&c, &[1.0, 1.0], 60).unwrap();
        assert!((r.rate.unwrap() - 0.8).abs() < 1e-3);
    }

    #[test]
    fn random_chain_rate_matches_second_eigenvalue_modulus() {
        let mut r = rng::stream(31, 0);
        let c = random_chain(20, &mut r);
        // make it slow enough to resolve: lazy mixture with a cyclic shift
        let n = c.n();
        let shift = nalgebra::DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
        let lazy = FiniteChain::from_matrix(c.matrix() * 0.15 + shift * 0.05 + nalgebra::DMatrix::identity(n, n) * 0.8)
            .unwrap();
        let mut moduli: Vec<f64> = lazy.matrix().complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let slem = moduli[1];
        let fit = ergodicity_rate(&lazy, &vec![1.0; n], 200).unwrap();
        assert!((fit.rate.unwrap() - slem).abs() < 1e-2, "{:?} vs {slem}", fit.rate);
    }

    #[test]
    fn single_step_has_no_fit() {
        let c = FiniteChain::two_state(0.1, 0.1).unwrap();
        assert_eq!(ergodicity_rate(&c, &[1.0, 1.0], 1).unwrap().rate, None);
    }
}
