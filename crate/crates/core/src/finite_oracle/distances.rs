use super::{check_len, FiniteChain};
use crate::error::{Error, Result};

/// `‖μ − ν‖_V = Σ_i |μ_i − ν_i| V_i`, attained by `f = V·sign(μ − ν)`.
pub fn v_norm_dist(mu: &[f64], nu: &[f64], v: &[f64]) -> Result<f64> {
    check_len(mu.len(), nu.len())?;
    check_len(mu.len(), v.len())?;
    if let Some(i) = v.iter().position(|x| !(*x >= 1.0)) {
        return Err(Error::InvalidArgument(format!("V[{i}] = {} < 1", v[i])));
    }
    Ok(mu.iter().zip(nu).zip(v).map(|((a, b), w)| (a - b).abs() * w).sum())
}

/// Total variation as `sup_{|f|≤1}`, i.e. the L1 distance (range `[0, 2]`).
pub fn tv_dist(mu: &[f64], nu: &[f64]) -> Result<f64> {
    check_len(mu.len(), nu.len())?;
    Ok(mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum())
}

/// `D_χ²(ν‖μ) = Σ ν_i²/μ_i − 1`.
pub fn chi2_div(nu: &[f64], mu: &[f64]) -> Result<f64> {
    check_len(mu.len(), nu.len())?;
    let mut total = 0.0;
    for (i, (n, m)) in nu.iter().zip(mu).enumerate() {
        if !(*m > 0.0) {
            return Err(Error::ZeroDenominator(i));
        }
        total += n * n / m;
    }
    Ok((total - 1.0).max(0.0))
}

/// `max_x ‖δ_x P − δ_x P̂‖_TV`.
pub fn kernel_tv(p: &FiniteChain, phat: &FiniteChain) -> Result<f64> {
    check_len(p.n(), phat.n())?;
    let d = p.matrix() - phat.matrix();
    Ok((0..p.n())
        .map(|i| d.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// `max_x ‖δ_x P − δ_x P̂‖_V / V(x)`.
pub fn kernel_v_norm(p: &FiniteChain, phat: &FiniteChain, v: &[f64]) -> Result<f64> {
    check_len(p.n(), phat.n())?;
    check_len(p.n(), v.len())?;
    let mut worst: f64 = 0.0;
    for i in 0..p.n() {
        let d = v_norm_dist(&p.row(i), &phat.row(i), v)?;
        worst = worst.max(d / v[i]);
    }
    Ok(worst)
}
