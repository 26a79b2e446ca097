use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use perturbed_mcmc::finite_oracle::{reversibility_residual, spectral_gap};
use perturbed_mcmc::inverse_problem::{forward, ForwardSpec, PPParams, N_PARAMS, THETA_TRUE};
use perturbed_mcmc::io::{fmt_f64, load_chain};
use perturbed_mcmc::runner::{self, ExperimentConfig};
use perturbed_mcmc::samplers::tempering_ladder;
use perturbed_mcmc::Result;

#[derive(Parser)]
#[command(name = "pmcmc", version, about = "Perturbed MCMC experiments and exact finite-chain oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the pass/fail table of a finished run; exits 1 on any failure.
    Summarize { manifest: PathBuf },
    /// Print the tempering ladder as CSV.
    Ladder {
        #[arg(long = "K")]
        k: usize,
        #[arg(long, default_value_t = 1.3)]
        alpha: f64,
    },
    /// Exact finite-chain diagnostics.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Predator–prey observables at the observation times as CSV.
    Forward {
        /// Comma-separated parameter vector; defaults to the true parameters.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        theta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.03125)]
        h: f64,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Spectral gap of a chain stored in the chain CSV format.
    Gap { chain: PathBuf },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seed,
            output_dir,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let manifest = runner::run(&cfg)?;
            let dir = cfg.resolved_output_dir();
            println!(
                "{} finished in {:.1}s; {} files in {}",
                manifest.kind.label(),
                manifest.wall_clock_seconds,
                manifest.files.len(),
                dir.display()
            );
            println!("manifest: {}", dir.join(runner::MANIFEST_FILE).display());
        }
        Command::Summarize { manifest } => {
            let summary = runner::summarize(&manifest)?;
            print!("{}", summary.table());
            if !summary.all_pass() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Ladder { k, alpha } => {
            println!("k,beta");
            for (i, b) in tempering_ladder(k, alpha)?.iter().enumerate() {
                println!("{i},{}", fmt_f64(*b));
            }
        }
        Command::Oracle {
            command: OracleCommand::Gap { chain },
        } => {
            let c = load_chain(&chain)?;
            let pi = c.stationary_or_solve()?;
            let report = spectral_gap(&c)?;
            println!("states,{}", c.n());
            println!("kappa,{}", fmt_f64(report.kappa));
            println!("reversibility_residual,{}", fmt_f64(reversibility_residual(c.matrix(), &pi)));
            println!(
                "eigenvalues,{}",
                report.eigenvalues.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
            );
            println!("pi,{}", pi.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        }
        Command::Forward { theta, h } => {
            let theta = theta.unwrap_or_else(|| THETA_TRUE.to_vec());
            let theta: [f64; N_PARAMS] = theta.as_slice().try_into().map_err(|_| {
                perturbed_mcmc::Error::DimensionMismatch {
                    expected: N_PARAMS,
                    got: theta.len(),
                }
            })?;
            let spec = ForwardSpec::new(h)?;
            let values = forward(&PPParams::new(theta)?, &spec)?;
            println!("t,prey,predator");
            for (t, pair) in spec.obs_times.iter().zip(values.chunks(2)) {
                println!("{},{},{}", fmt_f64(*t), fmt_f64(pair[0]), fmt_f64(pair[1]));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
