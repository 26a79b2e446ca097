//! Exact finite-chain experiments and the solver convergence study.

use rand::Rng;
use serde_json::json;

use super::{CriterionRow, ExperimentConfig, OutputDir, RunResults, SeedEntry, SweepFamily};
use crate::densities::{Bump, LogTarget};
use crate::diagnostics::{mc_error_bound, mean_var};
use crate::error::Result;
use crate::finite_oracle::{
    fit_loglog_slope, perturbation_sweep, spectral_gap, GridRwmFamily, MetropolisFamily, PerturbationFamily,
    SweepReport, Grid,
};
use crate::inverse_problem::{forward, rk2_solve, step_at_level, ForwardSpec, PPParams, T_FINAL};
use crate::io::fmt_f64;
use crate::rng;
use crate::samplers::{FiniteKernel, TransitionKernel};

const SCHEMA_PERTURBATION: &str = "pmcmc.perturbation.v1";
const SCHEMA_MC_ERROR: &str = "pmcmc.mc_error.v1";
const SCHEMA_FORWARD: &str = "pmcmc.forward_convergence.v1";
const SCHEMA_TRAJECTORY: &str = "pmcmc.trajectory.v1";

fn family_for(cfg: &ExperimentConfig, c: usize) -> Result<(Box<dyn PerturbationFamily + Send + Sync>, u64)> {
    let s = &cfg.sweep;
    let seed = rng::derive_seed(cfg.seed, &[cfg.kind.seed_label(), c as u64]);
    Ok(match s.family {
        SweepFamily::Metropolis => (Box::new(MetropolisFamily::random(s.states, seed)?), seed),
        SweepFamily::GridRwm => {
            // step sizes spread over [h/2, 3h/2)
            let h = s.grid_h * (0.5 + c as f64 / s.chains as f64);
            let fam = GridRwmFamily {
                target: LogTarget::truncated_normal(vec![s.grid_lower], vec![s.grid_upper]),
                bump: Bump::sin_coordinate(0),
                h,
                grid: Grid::interval(s.grid_lower, s.grid_upper, s.grid_cells)?,
            };
            (Box::new(fam), seed)
        }
    })
}

fn fold_minmax(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        if v.is_nan() {
            (f64::NAN, f64::NAN)
        } else {
            (lo.min(v), hi.max(v))
        }
    })
}

pub(super) fn run_sweep(cfg: &ExperimentConfig, workers: usize, out: &mut OutputDir) -> Result<(RunResults, Vec<SeedEntry>)> {
    let chains: Vec<usize> = (0..cfg.sweep.chains).collect();
    let results: Vec<Result<(SweepReport, u64)>> = super::parallel_map(&chains, workers, |&c| {
        let (fam, seed) = family_for(cfg, c)?;
        Ok((perturbation_sweep(fam.as_ref(), &cfg.sweep.eps)?, seed))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut w = out.csv("perturbation.csv", SCHEMA_PERTURBATION)?;
    w.write_record([
        "chain", "eps", "op_norm", "kappa_base", "kappa_pert", "kappa_deficit", "chi2", "tv_kernel", "v_norm_kernel",
    ])?;
    for (c, (sweep, _)) in results.iter().enumerate() {
        for r in &sweep.reports {
            w.write_record([
                c.to_string(),
                fmt_f64(r.eps),
                fmt_f64(r.op_norm),
                fmt_f64(r.kappa_base),
                fmt_f64(r.kappa_pert),
                fmt_f64(r.kappa_deficit()),
                fmt_f64(r.chi2),
                fmt_f64(r.tv_kernel),
                fmt_f64(r.v_norm_kernel),
            ])?;
        }
    }
    w.flush()?;

    let exponents: Vec<_> = results
        .iter()
        .enumerate()
        .map(|(c, (s, _))| {
            json!({
                "chain": c,
                "kappa_deficit": s.exponents.kappa_deficit,
                "chi2": s.exponents.chi2,
                "op_norm": s.exponents.op_norm,
                "max_deficit_ratio": s.max_deficit_ratio,
            })
        })
        .collect();
    out.json("exponents.json", &exponents)?;

    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let max_ratio = fold_minmax(results.iter().map(|(s, _)| s.max_deficit_ratio)).1;
    // chains whose gap never shrinks satisfy the degradation bound trivially
    let degrading: Vec<f64> = results.iter().filter_map(|(s, _)| s.exponents.kappa_deficit).collect();
    let deficit_min = if degrading.is_empty() { f64::NAN } else { fold_minmax(degrading.iter().copied()).0 };
    let (chi2_min, chi2_max) = fold_minmax(results.iter().map(|(s, _)| nan(s.exponents.chi2)));
    let criteria = vec![
        CriterionRow::at_most("sweep.max_deficit_ratio", max_ratio, 10.0),
        CriterionRow::at_least("sweep.deficit_slope.min", deficit_min, 0.8),
        CriterionRow::at_least("sweep.chi2_slope.min", chi2_min, 1.7),
        CriterionRow::at_most("sweep.chi2_slope.max", chi2_max, 2.3),
    ];
    let seeds = results
        .iter()
        .enumerate()
        .map(|(c, (_, seed))| SeedEntry {
            key: format!("chain{c}"),
            seed: *seed,
        })
        .collect();
    let details = json!({
        "family": cfg.sweep.family,
        "eps": cfg.sweep.eps,
        "degrading_chains": degrading.len(),
        "exponents": exponents,
    });
    Ok((
        RunResults {
            kind: cfg.kind,
            criteria,
            details,
        },
        seeds,
    ))
}

/// Exact quantities for one perturbed chain of the mc-error study.
struct McSetup {
    kernel: FiniteKernel,
    pi_hat: Vec<f64>,
    kappa_hat: f64,
    /// Test functions with values in `[-1, 1]`.
    functions: Vec<Vec<f64>>,
}

fn mc_setup(cfg: &ExperimentConfig, c: usize) -> Result<(McSetup, u64)> {
    let seed = rng::derive_seed(cfg.seed, &[cfg.kind.seed_label(), c as u64]);
    let fam = MetropolisFamily::random(cfg.sweep.states, seed)?;
    let chain = fam.perturbed(cfg.sweep.eps[0])?;
    let pi_hat = chain.stationary_or_solve()?;
    let kappa_hat = spectral_gap(&chain)?.kappa;
    let mut r = rng::stream(seed, 1);
    let functions = (0..cfg.sweep.functions)
        .map(|_| (0..chain.n()).map(|_| r.random_range(-1.0..=1.0)).collect())
        .collect();
    Ok((
        McSetup {
            kernel: FiniteKernel::new(&chain, &pi_hat)?,
            pi_hat,
            kappa_hat,
            functions,
        },
        seed,
    ))
}

/// Ergodic averages of every test function along one chain of length `m`
/// started from a draw of `π̂`.
fn mc_averages(setup: &McSetup, m: usize, seed: u64) -> Result<Vec<f64>> {
    let mut r = rng::stream(seed, 0);
    let u: f64 = r.random();
    let mut acc = 0.0;
    let x0 = setup
        .pi_hat
        .iter()
        .position(|p| {
            acc += p;
            u < acc
        })
        .unwrap_or(setup.pi_hat.len() - 1);
    let mut cur = setup.kernel.prepare(x0)?;
    let mut sums = vec![0.0; setup.functions.len()];
    for step in 0..m {
        if step > 0 {
            setup.kernel.transition(&mut cur, &mut r)?;
        }
        for (s, f) in sums.iter_mut().zip(&setup.functions) {
            *s += f[cur.state];
        }
    }
    Ok(sums.into_iter().map(|s| s / m as f64).collect())
}

pub(super) fn run_mc_error(cfg: &ExperimentConfig, workers: usize, out: &mut OutputDir) -> Result<(RunResults, Vec<SeedEntry>)> {
    let setups = (0..cfg.sweep.chains).map(|c| mc_setup(cfg, c)).collect::<Result<Vec<_>>>()?;
    let ms = &cfg.sweep.m_values;
    let jobs: Vec<(usize, usize, usize)> = (0..setups.len())
        .flat_map(|c| (0..ms.len()).flat_map(move |mi| (0..cfg.replicates).map(move |r| (c, mi, r))))
        .collect();
    let label = cfg.kind.seed_label();
    let averages = super::parallel_map(&jobs, workers, |&(c, mi, r)| {
        let seed = rng::derive_seed(cfg.seed, &[label, c as u64, ms[mi] as u64, r as u64]);
        mc_averages(&setups[c].0, ms[mi], seed)
    });
    let averages = averages.into_iter().collect::<Result<Vec<_>>>()?;

    let mut w = out.csv("mc_error.csv", SCHEMA_MC_ERROR)?;
    w.write_record(["chain", "function", "m", "kappa_hat", "var_f", "mse", "bound", "ratio"])?;
    let mut worst_ratio: f64 = 0.0;
    let mut slopes = Vec::new();
    let per_chain = ms.len() * cfg.replicates;
    for (c, (setup, _)) in setups.iter().enumerate() {
        for (k, f) in setup.functions.iter().enumerate() {
            let mean: f64 = f.iter().zip(&setup.pi_hat).map(|(v, p)| v * p).sum();
            let var: f64 = f.iter().zip(&setup.pi_hat).map(|(v, p)| p * (v - mean).powi(2)).sum();
            let mut mses = Vec::with_capacity(ms.len());
            for (mi, &m) in ms.iter().enumerate() {
                let base = c * per_chain + mi * cfg.replicates;
                let errs: Vec<f64> = averages[base..base + cfg.replicates].iter().map(|a| (a[k] - mean).powi(2)).collect();
                let mse = mean_var(&errs).0;
                let bound = mc_error_bound(setup.kappa_hat, var, m)?;
                worst_ratio = worst_ratio.max(mse / bound);
                mses.push(mse);
                w.write_record([
                    c.to_string(),
                    k.to_string(),
                    m.to_string(),
                    fmt_f64(setup.kappa_hat),
                    fmt_f64(var),
                    fmt_f64(mse),
                    fmt_f64(bound),
                    fmt_f64(mse / bound),
                ])?;
            }
            let xs: Vec<f64> = ms.iter().map(|m| *m as f64).collect();
            slopes.push(fit_loglog_slope(&xs, &mses).unwrap_or(f64::NAN));
        }
    }
    w.flush()?;

    let mut criteria = vec![CriterionRow::at_most("mc_error.mse_over_bound.max", worst_ratio, 1.0)];
    if ms.len() >= 2 {
        let (lo, hi) = fold_minmax(slopes.iter().copied());
        criteria.push(CriterionRow::at_least("mc_error.mse_slope.min", lo, -1.15));
        criteria.push(CriterionRow::at_most("mc_error.mse_slope.max", hi, -0.85));
    }
    let seeds = setups
        .iter()
        .enumerate()
        .map(|(c, (_, seed))| SeedEntry {
            key: format!("chain{c}"),
            seed: *seed,
        })
        .collect();
    let details = json!({
        "eps": cfg.sweep.eps[0],
        "m_values": ms,
        "kappa_hat": setups.iter().map(|(s, _)| s.kappa_hat).collect::<Vec<_>>(),
        "slopes": slopes,
    });
    Ok((
        RunResults {
            kind: cfg.kind,
            criteria,
            details,
        },
        seeds,
    ))
}

pub(super) fn run_forward(cfg: &ExperimentConfig, workers: usize, out: &mut OutputDir) -> Result<(RunResults, Vec<SeedEntry>)> {
    let truth = PPParams::truth();
    let ref_level = cfg.target.ref_level;
    let mut levels = cfg.sweep.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut all = levels.clone();
    all.push(ref_level);
    let outputs = super::parallel_map(&all, workers, |&j| forward(&truth, &ForwardSpec::at_level(j)?));
    let mut outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = outputs.pop().expect("reference level");
    let errors: Vec<f64> = outputs
        .iter()
        .map(|f| f.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();

    let mut w = out.csv("forward_convergence.csv", SCHEMA_FORWARD)?;
    w.write_record(["level", "h", "error", "log2_ratio"])?;
    for (i, &j) in levels.iter().enumerate() {
        let ratio = if i == 0 { String::new() } else { fmt_f64(ratios[i - 1]) };
        w.write_record([j.to_string(), fmt_f64(step_at_level(j)), fmt_f64(errors[i]), ratio])?;
    }
    w.flush()?;

    let traj = rk2_solve(&truth, step_at_level(ref_level), T_FINAL)?;
    let mut w = out.csv("trajectory.csv", SCHEMA_TRAJECTORY)?;
    w.write_record(["t", "prey", "predator"])?;
    for i in 0..traj.times.len() {
        w.write_record([fmt_f64(traj.times[i]), fmt_f64(traj.prey[i]), fmt_f64(traj.predator[i])])?;
    }
    w.flush()?;

    let (lo, hi) = fold_minmax(ratios.iter().copied());
    let criteria = vec![
        CriterionRow::at_least("forward.log2_ratio.min", lo, 1.8),
        CriterionRow::at_most("forward.log2_ratio.max", hi, 2.2),
    ];
    let details = json!({ "levels": levels, "ref_level": ref_level, "errors": errors, "log2_ratios": ratios });
    Ok((
        RunResults {
            kind: cfg.kind,
            criteria,
            details,
        },
        Vec::new(),
    ))
}
