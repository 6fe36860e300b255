use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use randrb::Result;
use randrb_cli::config::{DualMethod, ExperimentConfig};
use randrb_cli::{cmd_build, cmd_estimate, cmd_fig21, cmd_sweep_histogram, cmd_table22, EstimateOptions};

#[derive(Parser)]
#[command(name = "randrb", version, about = "Randomized error estimation for reduced basis models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline phase: primal space, sketch, dual space and estimator blocks.
    Build {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Evaluate the estimator on an online set using the artifacts of `build`.
    Estimate {
        artifacts: PathBuf,
        /// CSV of online parameters (`mu_1,mu_2,...`).
        #[arg(long)]
        online: Option<PathBuf>,
        /// Also compute full solutions, true errors and effectivities.
        #[arg(long)]
        with_truth: bool,
        /// Use full dual solves instead of the reduced duals.
        #[arg(long)]
        exact_duals: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample counts `K` over `(δ, w, #M)`.
    Table22 {
        #[arg(long, default_value = "table22.csv")]
        output: PathBuf,
    },
    /// Exact and bounded failure probabilities.
    Fig21 {
        #[arg(long, default_value = "fig21.csv")]
        output: PathBuf,
        #[arg(long, default_value_t = 60)]
        grid: usize,
    },
    /// Effectivities over repeated sketch draws.
    SweepHistogram {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    covariance: Option<String>,
    #[arg(long)]
    n_primal: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    sketch_seed: Option<u64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(c) = &self.covariance {
            cfg.covariance = c.clone();
        }
        if let Some(n) = self.n_primal {
            cfg.n_primal = n;
        }
        if let Some(m) = &self.method {
            cfg.dual.method = match m.as_str() {
                "alg1" => DualMethod::Alg1,
                "alg2" => DualMethod::Alg2,
                "pod" => DualMethod::Pod,
                other => return Err(randrb::Error::Config(format!("unknown dual method `{other}`"))),
            };
        }
        if let Some(t) = self.tol {
            cfg.dual.tol = t;
        }
        if let Some(q) = self.q {
            cfg.dual.q = q;
        }
        if let Some(k) = self.k {
            cfg.sketch = randrb_cli::SketchPlan {
                k: Some(k),
                ..Default::default()
            };
        }
        if let Some(s) = self.sketch_seed {
            cfg.seeds.sketch = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { exp } => {
            let man = cmd_build(&exp.load()?)?;
            println!(
                "built: N={} n={} K={} n_dual={}",
                man.n_dofs.unwrap_or(0),
                man.n_primal.unwrap_or(0),
                man.k.unwrap_or(0),
                man.n_dual.unwrap_or(0)
            );
        }
        Command::Estimate {
            artifacts,
            online,
            with_truth,
            exact_duals,
            output,
        } => {
            let s = cmd_estimate(
                &artifacts,
                &EstimateOptions {
                    online,
                    with_truth,
                    exact_duals,
                    output,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Table22 { output } => {
            cmd_table22(&output)?;
        }
        Command::Fig21 { output, grid } => {
            cmd_fig21(&output, grid)?;
        }
        Command::SweepHistogram { exp, repetitions } => {
            let rows = cmd_sweep_histogram(&exp.load()?, repetitions)?;
            println!("{} rows", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
