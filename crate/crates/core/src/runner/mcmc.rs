//! RWM, MALA and tempering runs on the predator–prey posterior across
//! solver refinement levels.

use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::{CriterionRow, ExperimentConfig, ExperimentKind, OutputDir, RunResults, SeedEntry};
use crate::diagnostics::{autocorr_time, default_burn_in, ks_distance, mean_var};
use crate::error::{Error, Result};
use crate::inverse_problem::{
    inverse_probit, posterior_target, probit_transform, save_observed, step_at_level, synth_data, ForwardSpec,
    ObservedData, PPParams, N_PARAMS, PARAM_NAMES, THETA_TRUE,
};
use crate::io::fmt_f64;
use crate::rng;
use crate::samplers::{pt_step, run_chain, tempering_ladder, MHKernel, PTConfig, PTLevel, PTState, PtRng, Trace};

/// Lowest acceptance rate at which a replicate counts as mixing.
const MIN_ACCEPTANCE: f64 = 0.01;
const SCHEMA_REPLICATES: &str = "pmcmc.replicates.v1";
const SCHEMA_IAT: &str = "pmcmc.iat_summary.v1";
const SCHEMA_KS: &str = "pmcmc.ks.v1";
const SCHEMA_MARGINALS: &str = "pmcmc.marginals.v1";
const SCHEMA_LADDER: &str = "pmcmc.ladder.v1";

const MARGINAL_BINS: usize = 40;
/// Stream label for start-state draws, kept apart from chain seeds.
const START_LABEL: u64 = 0x53_5441_5254;

/// Samplers ready to run at one refinement level.
enum LevelSampler {
    Single(MHKernel),
    Tempered(PTConfig<MHKernel>),
}

impl LevelSampler {
    fn build(cfg: &ExperimentConfig, spec: ForwardSpec, data: &ObservedData, betas: &[f64]) -> Result<Self> {
        let h = cfg.h_step();
        Ok(match cfg.kind {
            ExperimentKind::Rwm => Self::Single(MHKernel::random_walk(posterior_target(spec, data.clone(), 1.0)?, h)?),
            ExperimentKind::Mala => Self::Single(MHKernel::langevin(posterior_target(spec, data.clone(), 1.0)?, h)?),
            ExperimentKind::Pt => {
                let levels = betas
                    .iter()
                    .map(|&b| {
                        Ok(PTLevel {
                            kernel: MHKernel::random_walk(posterior_target(spec.clone(), data.clone(), b)?, h)?,
                            steps: cfg.kernel.t_k,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::Tempered(PTConfig::new(levels)?)
            }
            _ => unreachable!("not an MCMC experiment"),
        })
    }

    /// Returns the target-level trace and per-pair swap rates.
    fn run(&self, x0: &[f64], n: usize, seed: u64) -> Result<(Trace, Vec<f64>)> {
        match self {
            Self::Single(k) => Ok((run_chain(k, x0, n, seed)?, Vec::new())),
            Self::Tempered(config) => {
                let levels = config.levels().len();
                let mut state = PTState::new(config, vec![x0.to_vec(); levels])?;
                let mut r = PtRng::new(seed, levels);
                let top = config.top();
                let mut trace = Trace::new(x0.len(), seed, format!("pt top level of {levels}"));
                let mut prev = 0;
                for _ in 0..n {
                    pt_step(config, &mut state, &mut r)?;
                    trace.push(state.replica(top), state.level_accepts[top] > prev);
                    prev = state.level_accepts[top];
                }
                let rates = (0..top).map(|k| state.swap_stats.rate(k)).collect();
                Ok((trace, rates))
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Job {
    level_index: usize,
    replicate: usize,
    seed: u64,
}

#[derive(Clone, Debug)]
struct ReplicateStats {
    acceptance: f64,
    swap_rates: Vec<f64>,
    burn_in: usize,
    taus: Vec<f64>,
    /// Thinned post-burn-in states.
    samples: Vec<Vec<f64>>,
}

fn run_replicate(cfg: &ExperimentConfig, sampler: &LevelSampler, job: &Job) -> Result<ReplicateStats> {
    let x_true: Vec<f64> = THETA_TRUE.iter().map(|t| inverse_probit(*t)).collect();
    let mut g = rng::stream(
        rng::derive_seed(cfg.seed, &[cfg.kind.seed_label(), job.replicate as u64, START_LABEL]),
        0,
    );
    let x0: Vec<f64> = x_true
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut g);
            v + cfg.target.start_dispersion * z
        })
        .collect();
    let (mut trace, swap_rates) = sampler.run(&x0, cfg.iterations, job.seed)?;
    let burn_in = match cfg.target.burn_in {
        Some(b) => b.min(trace.len() / 2),
        None => (0..trace.dim())
            .map(|c| default_burn_in(&trace.coordinate(c)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0),
    };
    trace.discard(burn_in);
    let taus = (0..trace.dim())
        .map(|c| autocorr_time(&trace.coordinate(c)).map(|r| r.tau))
        .collect::<Result<Vec<_>>>()?;
    let samples = trace.states().step_by(cfg.target.ks_thin).map(<[f64]>::to_vec).collect();
    Ok(ReplicateStats {
        acceptance: trace.acceptance_rate(),
        swap_rates,
        burn_in,
        taus,
        samples,
    })
}

pub(super) fn run(cfg: &ExperimentConfig, workers: usize, out: &mut OutputDir) -> Result<(RunResults, Vec<SeedEntry>)> {
    let mut levels = cfg.target.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let h_ref = step_at_level(cfg.target.ref_level);
    let data = synth_data(&PPParams::truth(), h_ref, cfg.target.data_seed)?;
    save_observed(&data, &ForwardSpec::new(h_ref)?, &out.path("observed.csv"))?;
    out.register("observed.csv");

    let betas = if cfg.kind == ExperimentKind::Pt {
        let betas = tempering_ladder(cfg.kernel.k, cfg.kernel.alpha)?;
        let mut w = out.csv("ladder.csv", SCHEMA_LADDER)?;
        w.write_record(["k", "beta"])?;
        for (k, b) in betas.iter().enumerate() {
            w.write_record([k.to_string(), fmt_f64(*b)])?;
        }
        w.flush()?;
        betas
    } else {
        Vec::new()
    };

    let samplers = levels
        .iter()
        .map(|&j| LevelSampler::build(cfg, ForwardSpec::at_level(j)?, &data, &betas))
        .collect::<Result<Vec<_>>>()?;

    let label = cfg.kind.seed_label();
    let jobs: Vec<Job> = (0..levels.len())
        .flat_map(|li| (0..cfg.replicates).map(move |r| (li, r)))
        .map(|(li, r)| {
            let key = if cfg.target.common_random_numbers {
                vec![label, r as u64]
            } else {
                vec![label, r as u64, levels[li] as u64]
            };
            Job {
                level_index: li,
                replicate: r,
                seed: rng::derive_seed(cfg.seed, &key),
            }
        })
        .collect();
    let outcomes = super::parallel_map(&jobs, workers, |job| run_replicate(cfg, &samplers[job.level_index], job));

    let seeds: Vec<SeedEntry> = std::iter::once(SeedEntry {
        key: "data".into(),
        seed: cfg.target.data_seed,
    })
    .chain(jobs.iter().map(|j| SeedEntry {
        key: format!("level{}/replicate{}", levels[j.level_index], j.replicate),
        seed: j.seed,
    }))
    .collect();

    write_replicates(cfg, out, &levels, &jobs, &outcomes)?;

    // per level: τ samples per coordinate and pooled thinned states
    let mut taus = vec![vec![Vec::new(); N_PARAMS]; levels.len()];
    let mut pooled = vec![vec![Vec::new(); N_PARAMS]; levels.len()];
    let mut acceptance = vec![Vec::new(); levels.len()];
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        if let Ok(s) = outcome {
            let li = job.level_index;
            acceptance[li].push(s.acceptance);
            for c in 0..N_PARAMS {
                taus[li][c].push(s.taus[c]);
                pooled[li][c].extend(s.samples.iter().map(|x| x[c]));
            }
        }
    }

    let mut w = out.csv("iat_summary.csv", SCHEMA_IAT)?;
    w.write_record(["level", "h", "coord", "name", "mean_tau", "sd_tau", "replicates_ok"])?;
    for (li, &j) in levels.iter().enumerate() {
        for c in 0..N_PARAMS {
            let (m, v) = mean_var(&taus[li][c]);
            w.write_record([
                j.to_string(),
                fmt_f64(step_at_level(j)),
                c.to_string(),
                PARAM_NAMES[c].to_string(),
                fmt_f64(m),
                fmt_f64(v.sqrt()),
                taus[li][c].len().to_string(),
            ])?;
        }
    }
    w.flush()?;

    write_marginals(out, &levels, &pooled)?;

    let mut criteria = Vec::new();
    let mut ks_values = Vec::new();
    let kind = cfg.kind.label();
    if levels.len() >= 2 {
        let (a, b) = (levels.len() - 2, levels.len() - 1);
        let mut w = out.csv("ks.csv", SCHEMA_KS)?;
        w.write_record(["coord", "name", "level_a", "level_b", "ks"])?;
        for c in 0..N_PARAMS {
            let (ma, va) = mean_var(&taus[a][c]);
            let (mb, vb) = mean_var(&taus[b][c]);
            let pooled_sd = ((va + vb) / 2.0).sqrt();
            let enough = taus[a][c].len() >= 2 && taus[b][c].len() >= 2;
            let z = if enough { (ma - mb).abs() / pooled_sd } else { f64::NAN };
            criteria.push(CriterionRow::at_most(
                format!("{kind}.iat_stability.{}", PARAM_NAMES[c]),
                z,
                2.0,
            ));
            let ks = ks_distance(&pooled[a][c], &pooled[b][c]).unwrap_or(f64::NAN);
            ks_values.push(ks);
            w.write_record([
                c.to_string(),
                PARAM_NAMES[c].to_string(),
                levels[a].to_string(),
                levels[b].to_string(),
                fmt_f64(ks),
            ])?;
        }
        w.flush()?;
        for (c, ks) in ks_values.iter().enumerate() {
            criteria.push(CriterionRow::at_most(
                format!("{kind}.marginal_ks.{}", PARAM_NAMES[c]),
                *ks,
                0.05,
            ));
        }
    }

    // a chain that never moves has perfectly "stable" statistics, so the
    // comparisons above only mean something if every replicate mixed
    let min_acceptance = acceptance.iter().flatten().copied().fold(f64::NAN, f64::min);
    criteria.push(CriterionRow::at_least(format!("{kind}.min_acceptance"), min_acceptance, MIN_ACCEPTANCE));

    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    let details = json!({
        "h_step": cfg.h_step(),
        "levels": levels,
        "iterations": cfg.iterations,
        "replicates": cfg.replicates,
        "failed_replicates": failed,
        "mean_acceptance": acceptance.iter().map(|a| mean_var(a).0).collect::<Vec<_>>(),
        "ks": ks_values,
        "betas": betas,
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

fn write_replicates(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    levels: &[u32],
    jobs: &[Job],
    outcomes: &[Result<ReplicateStats>],
) -> Result<()> {
    let pairs = if cfg.kind == ExperimentKind::Pt { cfg.kernel.k } else { 0 };
    let mut w = out.csv("replicates.csv", SCHEMA_REPLICATES)?;
    let mut header: Vec<String> = ["level", "h", "replicate", "seed", "status", "acceptance", "burn_in"]
        .map(String::from)
        .to_vec();
    header.extend(PARAM_NAMES.iter().map(|n| format!("tau_{n}")));
    header.extend((0..pairs).map(|k| format!("swap_rate_{k}")));
    w.write_record(&header)?;
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let j = levels[job.level_index];
        let mut rec = vec![
            j.to_string(),
            fmt_f64(step_at_level(j)),
            job.replicate.to_string(),
            job.seed.to_string(),
        ];
        match outcome {
            Ok(s) => {
                rec.extend(["ok".to_string(), fmt_f64(s.acceptance), s.burn_in.to_string()]);
                rec.extend(s.taus.iter().map(|t| fmt_f64(*t)));
                rec.extend(s.swap_rates.iter().map(|t| fmt_f64(*t)));
            }
            Err(e) => {
                rec.push(format!("error: {}", status_text(e)));
                rec.extend(std::iter::repeat_n(String::new(), 2 + N_PARAMS + pairs));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn status_text(e: &Error) -> String {
    e.to_string().replace([',', '\n'], ";")
}

/// Histogram densities of the pooled samples in parameter space, on a
/// common support per coordinate so levels overlay directly.
fn write_marginals(out: &mut OutputDir, levels: &[u32], pooled: &[Vec<Vec<f64>>]) -> Result<()> {
    let theta: Vec<Vec<Vec<f64>>> = pooled
        .iter()
        .map(|coords| {
            coords
                .iter()
                .enumerate()
                .map(|(c, xs)| {
                    xs.iter()
                        .map(|x| {
                            let mut v = [0.0; N_PARAMS];
                            v[c] = *x;
                            probit_transform(&v).theta[c]
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut w = out.csv("marginals.csv", SCHEMA_MARGINALS)?;
    w.write_record(["level", "h", "coord", "name", "bin_lower", "bin_upper", "density"])?;
    for c in 0..N_PARAMS {
        let all = theta.iter().flat_map(|l| l[c].iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(hi > lo) {
            continue;
        }
        let width = (hi - lo) / MARGINAL_BINS as f64;
        for (li, &j) in levels.iter().enumerate() {
            let xs = &theta[li][c];
            let mut counts = [0usize; MARGINAL_BINS];
            for v in xs {
                counts[(((v - lo) / width) as usize).min(MARGINAL_BINS - 1)] += 1;
            }
            let scale = 1.0 / (xs.len().max(1) as f64 * width);
            for (b, n) in counts.iter().enumerate() {
                w.write_record([
                    j.to_string(),
                    fmt_f64(step_at_level(j)),
                    c.to_string(),
                    PARAM_NAMES[c].to_string(),
                    fmt_f64(lo + b as f64 * width),
                    fmt_f64(lo + (b + 1) as f64 * width),
                    fmt_f64(*n as f64 * scale),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
