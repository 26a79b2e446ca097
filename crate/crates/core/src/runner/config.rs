use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable prefixed to relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "PMCMC_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OracleSweep,
    Rwm,
    Mala,
    Pt,
    ForwardConvergence,
    McError,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::OracleSweep => "oracle-sweep",
            Self::Rwm => "rwm",
            Self::Mala => "mala",
            Self::Pt => "pt",
            Self::ForwardConvergence => "forward-convergence",
            Self::McError => "mc-error",
        }
    }

    pub fn is_mcmc(self) -> bool {
        matches!(self, Self::Rwm | Self::Mala | Self::Pt)
    }

    /// Stable id mixed into every derived seed.
    pub(crate) fn seed_label(self) -> u64 {
        self as u64 + 1
    }
}

/// Predator–prey posterior settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    /// Refinement levels `j` of `h = 0.5·2^{-j}`.
    pub levels: Vec<u32>,
    pub ref_level: u32,
    pub data_seed: u64,
    /// Per-coordinate sd of the replicate start states around `T⁻¹(θ_true)`.
    pub start_dispersion: f64,
    /// Share chain seeds across `h` levels (replicate r uses the same
    /// stream at every level).
    pub common_random_numbers: bool,
    /// Fixed burn-in; `None` uses ten pilot IATs.
    pub burn_in: Option<usize>,
    /// Keep every `ks_thin`-th post-burn-in sample for the marginal pools.
    pub ks_thin: usize,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            levels: vec![0, 1, 2, 3],
            ref_level: crate::inverse_problem::REF_LEVEL,
            data_seed: 1,
            start_dispersion: 0.02,
            common_random_numbers: true,
            burn_in: None,
            ks_thin: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    /// Proposal step `h` (covariance `2h·I`); defaults per sampler.
    pub h_step: Option<f64>,
    pub t_k: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            h_step: None,
            t_k: 1,
            k: 4,
            alpha: 1.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    /// Random reversible Metropolis chains with a random bounded bump.
    Metropolis,
    /// Grid discretization of RWM on a truncated Gaussian, sine bump.
    GridRwm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub eps: Vec<f64>,
    pub family: SweepFamily,
    /// Number of random chains (metropolis family).
    pub chains: usize,
    pub states: usize,
    pub grid_cells: usize,
    pub grid_lower: f64,
    pub grid_upper: f64,
    pub grid_h: f64,
    /// Refinement levels for forward-convergence.
    pub levels: Vec<u32>,
    /// Chain lengths for mc-error.
    pub m_values: Vec<usize>,
    /// Random bounded test functions for mc-error.
    pub functions: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            eps: vec![0.2, 0.1, 0.05, 0.025],
            family: SweepFamily::Metropolis,
            chains: 20,
            states: 30,
            grid_cells: 120,
            grid_lower: -4.0,
            grid_upper: 4.0,
            grid_h: 0.5,
            levels: vec![0, 1, 2, 3, 4],
            m_values: vec![100, 1_000, 10_000],
            functions: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Worker threads; results never depend on it.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("pmcmc-out")
}

fn default_iterations() -> usize {
    100_000
}

fn default_replicates() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Proposal step with the per-sampler default.
    pub fn h_step(&self) -> f64 {
        self.kernel.h_step.unwrap_or(match self.kind {
            ExperimentKind::Mala => 3e-7,
            _ => 3e-6,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.kind.is_mcmc() {
            if self.iterations < 2 * crate::diagnostics::MIN_SERIES_LEN {
                return Err(Error::config("iterations", "need at least 200 iterations for IAT estimates"));
            }
            if self.target.levels.is_empty() {
                return Err(Error::config("target.levels", "must be nonempty"));
            }
            if self.target.levels.iter().any(|j| *j > 12) {
                return Err(Error::config("target.levels", "levels above 12 are not supported"));
            }
            if !(self.target.start_dispersion >= 0.0) {
                return Err(Error::config("target.start_dispersion", "must be nonnegative"));
            }
            if self.target.ks_thin == 0 {
                return Err(Error::config("target.ks_thin", "must be at least 1"));
            }
            if !(self.h_step() > 0.0) {
                return Err(Error::config("kernel.h_step", "must be positive"));
            }
        }
        if self.kind == ExperimentKind::Pt {
            if self.kernel.k < 1 {
                return Err(Error::config("kernel.K", "must be at least 1"));
            }
            if !(self.kernel.alpha > 1.0) {
                return Err(Error::config("kernel.alpha", "must exceed 1"));
            }
            if self.kernel.t_k < 1 {
                return Err(Error::config("kernel.t_k", "must be at least 1"));
            }
        }
        match self.kind {
            ExperimentKind::OracleSweep => {
                if self.sweep.eps.is_empty() {
                    return Err(Error::config("sweep.eps", "must be nonempty"));
                }
                if self.sweep.eps.iter().any(|e| !(*e >= 0.0)) {
                    return Err(Error::config("sweep.eps", "values must be nonnegative"));
                }
                if self.sweep.chains == 0 || self.sweep.states < 2 {
                    return Err(Error::config("sweep.states", "need at least one chain of two states"));
                }
            }
            ExperimentKind::ForwardConvergence => {
                if self.sweep.levels.len() < 2 {
                    return Err(Error::config("sweep.levels", "need at least two levels"));
                }
            }
            ExperimentKind::McError => {
                if self.sweep.m_values.is_empty() || self.sweep.m_values.contains(&0) {
                    return Err(Error::config("sweep.m_values", "must be nonempty and positive"));
                }
                if self.sweep.functions == 0 {
                    return Err(Error::config("sweep.functions", "must be at least 1"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (keys sorted), so reordering
    /// fields in the config file does not change it.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Output directory, resolved against the output root when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => Path::new(&root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
