//! Drive the experiment runner from an in-memory config: a short RWM run
//! on the predator–prey posterior at two solver resolutions, followed by
//! the pass/fail summary the CLI prints. The run is far too short for
//! the marginals at the two resolutions to agree, so most KS rows fail;
//! `configs/rwm.toml` is the full-length version.
//!
//! ```bash
//! cargo run --release --example run_experiment
//! ```

use perturbed_mcmc::runner::{self, ExperimentConfig, MANIFEST_FILE};

const CONFIG: &str = r#"
kind = "rwm"
seed = 5
iterations = 5000
replicates = 2

[target]
levels = [1, 2]
"#;

fn main() -> perturbed_mcmc::Result<()> {
    let mut cfg = ExperimentConfig::from_toml(CONFIG)?;
    cfg.output_dir = std::env::temp_dir().join("pmcmc-example-run");
    let manifest = runner::run(&cfg)?;
    println!("config hash {}", manifest.config_hash);
    for f in &manifest.files {
        println!("  {} {}", &f.sha256[..12], f.name);
    }
    let summary = runner::summarize(&cfg.output_dir.join(MANIFEST_FILE))?;
    print!("{}", summary.table());
    Ok(())
}
