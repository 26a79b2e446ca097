//! Predator–prey parameter inference.
//!
//! The model is
//!
//! ```text
//! dγp/dt = r γp (1 − γp/K) − s γp γq / (w + γp)
//! dγq/dt = u γp γq / (w + γp) − v γq
//! ```
//!
//! with `θ = (γp(0), γq(0), r, K, s, w, u, v)`: the fifth entry is the
//! predation rate and the sixth the half-saturation constant. With
//! `θ_true = (50, 5, 0.6, 100, 1.2, 25, 0.5, 0.3)` this ordering gives
//! sustained oscillations; the opposite one drives the prey extinct within
//! one time unit.
//!
//! Parameters are sampled in an unconstrained space `x ∈ R⁸` and mapped onto
//! the prior box by the probit transform `θ_i = a + (b − a) Φ(x_i)`, so the
//! prior on `x` is standard normal.

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::densities::LogTarget;
use crate::error::{Error, Result};
use crate::rng;

pub const N_PARAMS: usize = 8;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["gp0", "gq0", "r", "K", "s", "w", "u", "v"];
pub const PRIOR_LOWER: f64 = 1e-3;
pub const PRIOR_UPPER: f64 = 2e2;
pub const THETA_TRUE: [f64; N_PARAMS] = [50.0, 5.0, 0.6, 100.0, 1.2, 25.0, 0.5, 0.3];

/// Coarsest step of the refinement ladder `h_j = H0·2^{-j}`.
pub const H0: f64 = 0.5;
/// Refinement level of the data-generating solve.
pub const REF_LEVEL: u32 = 6;
pub const T_FINAL: f64 = 40.0;
pub const N_OBS: usize = 20;
pub const OBS_SPACING: f64 = 2.0;
pub const NOISE_VAR: f64 = 4.0;
pub const MISFIT_SCALE: f64 = 1.0 / 8.0;
/// States larger than this count as a blowup.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

pub fn step_at_level(j: u32) -> f64 {
    H0 * 0.5f64.powi(j as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PPParams {
    pub theta: [f64; N_PARAMS],
}

impl PPParams {
    pub fn new(theta: [f64; N_PARAMS]) -> Result<Self> {
        if let Some(i) = theta.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "{} = {} must be finite and nonnegative",
                PARAM_NAMES[i], theta[i]
            )));
        }
        Ok(Self { theta })
    }

    pub fn truth() -> Self {
        Self { theta: THETA_TRUE }
    }

    pub fn in_prior_box(&self) -> bool {
        self.theta.iter().all(|t| *t > PRIOR_LOWER && *t < PRIOR_UPPER)
    }

    fn rhs(&self) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
        let [_, _, r, k, s, w, u, v] = self.theta;
        let inv_k = 1.0 / k;
        move |_, y| {
            let (p, q) = (y[0], y[1]);
            let interaction = p * q / (w + p);
            [r * p * (1.0 - p * inv_k) - s * interaction, u * interaction - v * q]
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`probit_transform`] on one coordinate, by bisection.
pub fn inverse_probit(theta: f64) -> f64 {
    let target = (theta - PRIOR_LOWER) / (PRIOR_UPPER - PRIOR_LOWER);
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn probit_transform(x: &[f64]) -> PPParams {
    let mut theta = [0.0; N_PARAMS];
    for (t, xi) in theta.iter_mut().zip(x) {
        *t = PRIOR_LOWER + (PRIOR_UPPER - PRIOR_LOWER) * normal_cdf(*xi);
    }
    PPParams { theta }
}

/// Number of steps of size `h` covering `span`, if `h` divides it.
fn steps_for(span: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let n = (span / h).round();
    if n < 1.0 || ((n * h - span) / span).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("step {h} does not divide {span}")));
    }
    Ok(n as usize)
}

/// Heun's method (explicit trapezoidal RK2) for `y' = f(t, y)` over
/// `steps` steps of size `h`, calling `observe(step_index, y)` after each
/// step. Blows up with the current time if a state leaves
/// `[-BLOWUP_THRESHOLD, BLOWUP_THRESHOLD]` or becomes non-finite.
pub fn heun<const N: usize, F, O>(f: F, y0: [f64; N], h: f64, steps: usize, mut observe: O) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(usize, &[f64; N]),
{
    let mut y = y0;
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = f(t, &y);
        let mut pred = [0.0; N];
        for i in 0..N {
            pred[i] = y[i] + h * k1[i];
        }
        let k2 = f(t + h, &pred);
        for i in 0..N {
            y[i] += 0.5 * h * (k1[i] + k2[i]);
        }
        if y.iter().any(|v| !(v.abs() <= BLOWUP_THRESHOLD)) {
            return Err(Error::Blowup((n + 1) as f64 * h));
        }
        observe(n + 1, &y);
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub prey: Vec<f64>,
    pub predator: Vec<f64>,
}

/// Full RK2 trajectory on the grid `0, h, …, t_final`.
pub fn rk2_solve(params: &PPParams, h: f64, t_final: f64) -> Result<Trajectory> {
    let steps = steps_for(t_final, h)?;
    let y0 = [params.theta[0], params.theta[1]];
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        prey: Vec::with_capacity(steps + 1),
        predator: Vec::with_capacity(steps + 1),
    };
    let mut record = |n: usize, y: &[f64; 2]| {
        traj.times.push(n as f64 * h);
        traj.prey.push(y[0]);
        traj.predator.push(y[1]);
    };
    record(0, &y0);
    heun(params.rhs(), y0, h, steps, &mut record)?;
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSpec {
    pub h: f64,
    pub t_final: f64,
    pub obs_times: Vec<f64>,
    pub noise_var: f64,
    pub misfit_scale: f64,
}

impl ForwardSpec {
    /// The standard observation design solved with step `h`, which must
    /// divide the observation spacing.
    pub fn new(h: f64) -> Result<Self> {
        steps_for(OBS_SPACING, h)?;
        Ok(Self {
            h,
            t_final: T_FINAL,
            obs_times: (1..=N_OBS).map(|i| OBS_SPACING * i as f64).collect(),
            noise_var: NOISE_VAR,
            misfit_scale: MISFIT_SCALE,
        })
    }

    pub fn at_level(j: u32) -> Result<Self> {
        Self::new(step_at_level(j))
    }

    /// Grid step index of each observation time.
    fn obs_steps(&self) -> Vec<usize> {
        self.obs_times.iter().map(|t| (t / self.h).round() as usize).collect()
    }
}

/// Interleaved `(prey, predator)` values at the observation times.
pub fn forward(params: &PPParams, spec: &ForwardSpec) -> Result<Vec<f64>> {
    let steps = steps_for(spec.t_final, spec.h)?;
    let obs = spec.obs_steps();
    let mut out = Vec::with_capacity(2 * obs.len());
    let mut next = 0;
    heun(
        params.rhs(),
        [params.theta[0], params.theta[1]],
        spec.h,
        steps,
        |n, y| {
            while next < obs.len() && obs[next] == n {
                out.extend_from_slice(y);
                next += 1;
            }
        },
    )?;
    if next != obs.len() {
        return Err(Error::InvalidArgument("observation time beyond t_final".into()));
    }
    Ok(out)
}

type Sensitivity = [[f64; N_PARAMS]; 2];

/// `(∂f/∂y) S + ∂f/∂θ` for the predator–prey right-hand side at `y`.
fn tangent(theta: &[f64; N_PARAMS], y: &[f64; 2], sens: &Sensitivity) -> Sensitivity {
    let [_, _, r, k, s, w, u, v] = *theta;
    let (p, q) = (y[0], y[1]);
    let d = 1.0 / (w + p);
    let i = p * q * d;
    let (di_dp, di_dq, di_dw) = (q * w * d * d, p * d, -i * d);
    let fy = [[r * (1.0 - 2.0 * p / k) - s * di_dp, -s * di_dq], [u * di_dp, u * di_dq - v]];
    let mut out = [[0.0; N_PARAMS]; 2];
    out[0][2] = p * (1.0 - p / k);
    out[0][3] = r * p * p / (k * k);
    out[0][4] = -i;
    out[0][5] = -s * di_dw;
    out[1][5] = u * di_dw;
    out[1][6] = i;
    out[1][7] = -q;
    for (row, dy) in out.iter_mut().zip(&fy) {
        for (j, o) in row.iter_mut().enumerate() {
            *o += dy[0] * sens[0][j] + dy[1] * sens[1][j];
        }
    }
    out
}

/// [`forward`] together with `∂G/∂θ`, one row per observable. The
/// derivative is that of the discrete Heun map itself, so it is the exact
/// gradient of the solver output at step `h`, not of the ODE solution.
pub fn forward_with_jacobian(params: &PPParams, spec: &ForwardSpec) -> Result<(Vec<f64>, Vec<[f64; N_PARAMS]>)> {
    let steps = steps_for(spec.t_final, spec.h)?;
    let obs = spec.obs_steps();
    let f = params.rhs();
    let (th, h) = (&params.theta, spec.h);
    let mut y = [th[0], th[1]];
    let mut sens: Sensitivity = [[0.0; N_PARAMS]; 2];
    sens[0][0] = 1.0;
    sens[1][1] = 1.0;
    let mut values = Vec::with_capacity(2 * obs.len());
    let mut jac = Vec::with_capacity(2 * obs.len());
    let mut next = 0;
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = f(t, &y);
        let dk1 = tangent(th, &y, &sens);
        let pred = [y[0] + h * k1[0], y[1] + h * k1[1]];
        let mut dpred = sens;
        for (row, d) in dpred.iter_mut().zip(&dk1) {
            for (a, b) in row.iter_mut().zip(d) {
                *a += h * b;
            }
        }
        let k2 = f(t + h, &pred);
        let dk2 = tangent(th, &pred, &dpred);
        for a in 0..2 {
            y[a] += 0.5 * h * (k1[a] + k2[a]);
            for j in 0..N_PARAMS {
                sens[a][j] += 0.5 * h * (dk1[a][j] + dk2[a][j]);
            }
        }
        if y.iter().any(|v| !(v.abs() <= BLOWUP_THRESHOLD)) {
            return Err(Error::Blowup((n + 1) as f64 * h));
        }
        while next < obs.len() && obs[next] == n + 1 {
            values.extend_from_slice(&y);
            jac.extend_from_slice(&sens);
            next += 1;
        }
    }
    if next != obs.len() {
        return Err(Error::InvalidArgument("observation time beyond t_final".into()));
    }
    Ok((values, jac))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedData {
    pub y: Vec<f64>,
    pub seed: u64,
    pub h_ref: f64,
}

/// `y = forward(θ, h_ref) + N(0, NOISE_VAR·I)`.
pub fn synth_data(theta: &PPParams, h_ref: f64, seed: u64) -> Result<ObservedData> {
    let spec = ForwardSpec::new(h_ref)?;
    let clean = forward(theta, &spec)?;
    let noise = Normal::new(0.0, spec.noise_var.sqrt()).expect("positive variance");
    let mut r = rng::stream(seed, 0);
    let y = clean.iter().map(|v| v + noise.sample(&mut r)).collect();
    Ok(ObservedData { y, seed, h_ref })
}

/// `misfit_scale · ‖G(x) − y‖²`, or `None` on blowup.
pub fn scaled_misfit(x: &[f64], spec: &ForwardSpec, data: &ObservedData) -> Option<f64> {
    let g = forward(&probit_transform(x), spec).ok()?;
    if g.len() != data.y.len() {
        return None;
    }
    let ss: f64 = g.iter().zip(&data.y).map(|(a, b)| (a - b).powi(2)).sum();
    Some(spec.misfit_scale * ss)
}

fn prior_log_density(x: &[f64]) -> f64 {
    -0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

/// `−‖x‖²/2 − (1/8)‖G(x) − y‖²`; `-inf` when the solve blows up.
pub fn log_posterior(x: &[f64], spec: &ForwardSpec, data: &ObservedData) -> f64 {
    match scaled_misfit(x, spec, data) {
        Some(m) => prior_log_density(x) - m,
        None => f64::NEG_INFINITY,
    }
}

pub fn tempered_log_posterior(x: &[f64], spec: &ForwardSpec, data: &ObservedData, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta = {beta} not in [0, 1]")));
    }
    Ok(match scaled_misfit(x, spec, data) {
        Some(m) => prior_log_density(x) - beta * m,
        None => f64::NEG_INFINITY,
    })
}

/// Gradient in `x` of the tempered log posterior; NaN where the solve
/// blows up.
pub fn log_posterior_gradient(x: &[f64], spec: &ForwardSpec, data: &ObservedData, beta: f64) -> Vec<f64> {
    let params = probit_transform(x);
    let (g, jac) = match forward_with_jacobian(&params, spec) {
        Ok(r) if r.0.len() == data.y.len() => r,
        _ => return vec![f64::NAN; x.len()],
    };
    let mut dmisfit = [0.0; N_PARAMS];
    for ((gi, yi), row) in g.iter().zip(&data.y).zip(&jac) {
        let c = 2.0 * spec.misfit_scale * (gi - yi);
        for (d, r) in dmisfit.iter_mut().zip(row) {
            *d += c * r;
        }
    }
    let scale = (PRIOR_UPPER - PRIOR_LOWER) / (2.0 * std::f64::consts::PI).sqrt();
    x.iter()
        .zip(dmisfit)
        .map(|(xi, d)| -xi - beta * d * scale * (-0.5 * xi * xi).exp())
        .collect()
}

/// The (tempered) posterior as a sampler target on `R⁸`, with its exact
/// gradient.
pub fn posterior_target(spec: ForwardSpec, data: ObservedData, beta: f64) -> Result<LogTarget> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta = {beta} not in [0, 1]")));
    }
    let name = format!("predator-prey(h={}, beta={beta})", spec.h);
    let (gspec, gdata) = (spec.clone(), data.clone());
    Ok(LogTarget::new(N_PARAMS, move |x| {
        match scaled_misfit(x, &spec, &data) {
            Some(m) => prior_log_density(x) - beta * m,
            None => f64::NEG_INFINITY,
        }
    })
    .with_gradient(move |x| log_posterior_gradient(x, &gspec, &gdata, beta))
    .named(name))
}

const DATA_SCHEMA: &str = "pmcmc.observed.v1";

/// Writes `time,species,value` rows behind a schema comment carrying the
/// seed and reference step.
pub fn write_observed<W: Write>(data: &ObservedData, spec: &ForwardSpec, mut out: W) -> Result<()> {
    writeln!(out, "# schema={DATA_SCHEMA} seed={} h_ref={:e}", data.seed, data.h_ref)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "species", "value"])?;
    for (i, t) in spec.obs_times.iter().enumerate() {
        for (s, name) in ["prey", "predator"].iter().enumerate() {
            w.write_record([crate::io::fmt_f64(*t), name.to_string(), crate::io::fmt_f64(data.y[2 * i + s])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_observed<R: Read>(mut input: R) -> Result<ObservedData> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let header = text
        .lines()
        .next()
        .filter(|l| l.starts_with("# schema=") && l.contains(DATA_SCHEMA))
        .ok_or_else(|| Error::InvalidArgument("missing observed-data schema header".into()))?;
    let field = |key: &str| -> Result<&str> {
        header
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key))
            .ok_or_else(|| Error::InvalidArgument(format!("header lacks {key}")))
    };
    let seed = field("seed=")?
        .parse()
        .map_err(|_| Error::InvalidArgument("bad seed".into()))?;
    let h_ref = field("h_ref=")?
        .parse()
        .map_err(|_| Error::InvalidArgument("bad h_ref".into()))?;
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let mut y = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        y.push(
            rec[2]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {}", &rec[2])))?,
        );
    }
    if y.len() != 2 * N_OBS {
        return Err(Error::DimensionMismatch {
            expected: 2 * N_OBS,
            got: y.len(),
        });
    }
    Ok(ObservedData { y, seed, h_ref })
}

pub fn save_observed(data: &ObservedData, spec: &ForwardSpec, path: &Path) -> Result<()> {
    write_observed(data, spec, std::fs::File::create(path)?)
}

pub fn load_observed(path: &Path) -> Result<ObservedData> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_observed(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn zero_populations_stay_zero() {
        let mut theta = THETA_TRUE;
        theta[0] = 0.0;
        theta[1] = 0.0;
        let t = rk2_solve(&PPParams::new(theta).unwrap(), 0.125, 40.0).unwrap();
        assert!(t.prey.iter().chain(&t.predator).all(|v| *v == 0.0));
        assert_eq!(t.times.len(), 321);
    }

    #[test]
    fn heun_is_second_order_on_decay() {
        let err = |h: f64| {
            let steps = (1.0 / h).round() as usize;
            let y = heun(|_, y: &[f64; 1]| [-y[0]], [1.0], h, steps, |_, _| {}).unwrap();
            (y[0] - (-1.0f64).exp()).abs()
        };
        for j in 0..4 {
            let h = 0.1 * 0.5f64.powi(j);
            let ratio = err(h) / err(h / 2.0);
            assert!((3.8..=4.2).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn forward_self_convergence_is_second_order() {
        let p = PPParams::truth();
        let reference = forward(&p, &ForwardSpec::at_level(REF_LEVEL).unwrap()).unwrap();
        let errs: Vec<f64> = (0..=4)
            .map(|j| l2(&forward(&p, &ForwardSpec::at_level(j).unwrap()).unwrap(), &reference))
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "{errs:?}");
        }
    }

    #[test]
    fn forward_has_forty_finite_values() {
        let g = forward(&PPParams::truth(), &ForwardSpec::at_level(REF_LEVEL).unwrap()).unwrap();
        assert_eq!(g.len(), 40);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn near_extinct_start_stays_small() {
        let mut theta = THETA_TRUE;
        theta[0] = PRIOR_LOWER;
        theta[1] = PRIOR_LOWER;
        // prey regrows logistically but starts from 1e-3; predators decay
        let g = forward(&PPParams::new(theta).unwrap(), &ForwardSpec::at_level(3).unwrap()).unwrap();
        assert!(g[1].abs() < 1e-2 && g[0] < 1.0, "{:?}", &g[..2]);
    }

    #[test]
    fn step_must_divide_spacing() {
        assert!(ForwardSpec::new(0.3).is_err());
        assert!(ForwardSpec::new(0.25).is_ok());
        assert!(rk2_solve(&PPParams::truth(), -1.0, 40.0).is_err());
    }

    #[test]
    fn probit_examples() {
        let mid = probit_transform(&[0.0; 8]);
        assert!(mid.theta.iter().all(|t| (t - 100.0005).abs() < 1e-12));
        let low = probit_transform(&[-8.0; 8]);
        assert!(low.theta.iter().all(|t| (t - PRIOR_LOWER).abs() < 1e-10 * (PRIOR_UPPER - PRIOR_LOWER)));
        // Φ(1.959964) from a 30-digit reference
        let t = probit_transform(&[1.959964]).theta[0];
        let phi = 0.975_000_000_903_557_6;
        assert!((t - (PRIOR_LOWER + (PRIOR_UPPER - PRIOR_LOWER) * phi)).abs() < 1e-9);
    }

    #[test]
    fn probit_is_monotone_and_inside_box() {
        let xs: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.1).collect();
        let ts: Vec<f64> = xs.iter().map(|x| probit_transform(&[*x]).theta[0]).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(ts.iter().all(|t| *t > PRIOR_LOWER && *t < PRIOR_UPPER));
        for t in THETA_TRUE {
            assert!((probit_transform(&[inverse_probit(t)]).theta[0] - t).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_misfit_leaves_the_prior() {
        let spec = ForwardSpec::at_level(2).unwrap();
        let x = [0.1, -0.3, -1.2, 0.0, -2.0, -0.9, -1.5, -1.8];
        let y = forward(&probit_transform(&x), &spec).unwrap();
        let data = ObservedData { y, seed: 0, h_ref: spec.h };
        let lp = log_posterior(&x, &spec, &data);
        assert!((lp - prior_log_density(&x)).abs() < 1e-12);
    }

    #[test]
    fn tempering_is_affine_in_beta() {
        let spec = ForwardSpec::at_level(2).unwrap();
        let data = synth_data(&PPParams::truth(), spec.h, 1).unwrap();
        let x: Vec<f64> = THETA_TRUE.iter().map(|t| inverse_probit(*t) + 0.01).collect();
        let at = |b| tempered_log_posterior(&x, &spec, &data, b).unwrap();
        assert_eq!(at(0.0), prior_log_density(&x));
        assert_eq!(at(1.0), log_posterior(&x, &spec, &data));
        assert!((at(0.5) - 0.5 * (at(0.0) + at(1.0))).abs() < 1e-9 * at(1.0).abs());
        assert!(tempered_log_posterior(&x, &spec, &data, 1.5).is_err());
    }

    #[test]
    fn blowup_maps_to_neg_infinity() {
        // K at its floor with a huge prey start: logistic term ~ -p²/K explodes
        let theta = [199.0, 1.0, 199.0, 1e-3, 1.0, 1.0, 1.0, 1.0];
        let spec = ForwardSpec::at_level(0).unwrap();
        assert!(matches!(forward(&PPParams::new(theta).unwrap(), &spec), Err(Error::Blowup(_))));
        let x: Vec<f64> = theta.iter().map(|t| inverse_probit(*t)).collect();
        let data = synth_data(&PPParams::truth(), spec.h, 0).unwrap();
        assert_eq!(log_posterior(&x, &spec, &data), f64::NEG_INFINITY);
    }

    #[test]
    fn synthetic_noise_has_the_declared_variance() {
        let spec = ForwardSpec::at_level(3).unwrap();
        let clean = forward(&PPParams::truth(), &spec).unwrap();
        let draws: Vec<Vec<f64>> = (0..1000)
            .map(|s| synth_data(&PPParams::truth(), spec.h, s).unwrap().y)
            .collect();
        assert_eq!(draws[0], synth_data(&PPParams::truth(), spec.h, 0).unwrap().y);
        for c in 0..40 {
            let res: Vec<f64> = draws.iter().map(|y| y[c] - clean[c]).collect();
            let (_, var) = crate::diagnostics::mean_var(&res);
            assert!((3.5..=4.5).contains(&var), "component {c}: {var}");
        }
    }

    #[test]
    fn observed_data_roundtrip() {
        let spec = ForwardSpec::at_level(3).unwrap();
        let data = synth_data(&PPParams::truth(), spec.h, 11).unwrap();
        let mut buf = Vec::new();
        write_observed(&data, &spec, &mut buf).unwrap();
        assert_eq!(read_observed(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn jacobian_solve_matches_plain_forward() {
        let spec = ForwardSpec::at_level(2).unwrap();
        let p = PPParams::new([40.0, 8.0, 0.7, 90.0, 1.1, 30.0, 0.45, 0.35]).unwrap();
        let (values, jac) = forward_with_jacobian(&p, &spec).unwrap();
        assert_eq!(values, forward(&p, &spec).unwrap());
        assert_eq!(jac.len(), values.len());
        // column j against a central difference in θ_j
        for j in 0..N_PARAMS {
            let step = 1e-6 * p.theta[j];
            let mut hi = p;
            let mut lo = p;
            hi.theta[j] += step;
            lo.theta[j] -= step;
            let (a, b) = (forward(&hi, &spec).unwrap(), forward(&lo, &spec).unwrap());
            for (i, row) in jac.iter().enumerate() {
                let fd = (a[i] - b[i]) / (2.0 * step);
                assert!((row[j] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "obs {i} param {j}: {} vs {fd}", row[j]);
            }
        }
    }

    #[test]
    fn posterior_gradient_matches_finite_differences() {
        let spec = ForwardSpec::at_level(3).unwrap();
        let data = synth_data(&PPParams::truth(), spec.h, 2).unwrap();
        let t = posterior_target(spec, data, 0.6).unwrap();
        let x: Vec<f64> = THETA_TRUE.iter().map(|v| inverse_probit(*v) + 0.003).collect();
        let g = t.gradient(&x);
        let coarse = crate::densities::central_difference(|p| t.log_density(p), &x, 1e-7);
        for (a, b) in g.iter().zip(&coarse) {
            assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}
