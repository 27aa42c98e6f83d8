use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nskb::environment::Grid;
use nskb::gp::greedy_mig_bound;
use nskb::harness::{run_experiment, sweep, theory_table, ExperimentConfig, SEED_ENV_VAR};
use nskb::kernels::{KernelFamily, KernelSpec};
use nskb::Result;

#[derive(Parser)]
#[command(name = "nskb", version, about = "Non-stationary kernelized bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write `regret.svg`.
        #[arg(long)]
        plot: bool,
    },
    /// Rerun a config once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path into the config, e.g. `environment.T` or `policies.0.beta_scale`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print the regret-rate table.
    Theory {
        #[arg(long)]
        family: KernelFamily,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        vt: f64,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 2.5)]
        nu: f64,
    },
    /// Greedy upper proxy for the maximum information gain on a grid.
    Mig {
        #[arg(long)]
        family: KernelFamily,
        /// Points per axis.
        #[arg(long)]
        grid: usize,
        /// Number of greedy picks.
        #[arg(long = "T")]
        rounds: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0.5)]
        lengthscale: f64,
        #[arg(long, default_value_t = 2.5)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            plot,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            cfg.plot |= plot;
            let exp = run_experiment(&cfg)?;
            for k in &exp.kernels {
                for c in &k.curves {
                    let last = c.mean.len() - 1;
                    println!(
                        "{:<24} {:<12} final regret {:.4} +/- {:.4} ({} seeds)",
                        k.kernel.label(),
                        c.policy,
                        c.mean[last],
                        c.stderr[last],
                        c.n_seeds
                    );
                }
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Sweep { config, param, values } => {
            let text = std::fs::read_to_string(&config).map_err(|e| nskb::Error::Io {
                path: config.clone(),
                source: e,
            })?;
            for (value, exp) in sweep(&text, &param, &values)? {
                for k in &exp.kernels {
                    for c in &k.curves {
                        println!(
                            "{param}={value:<10} {:<24} {:<12} final regret {:.4}",
                            k.kernel.label(),
                            c.policy,
                            c.mean[c.mean.len() - 1]
                        );
                    }
                }
            }
        }
        Command::Theory {
            family,
            horizon,
            vt,
            d,
            nu,
        } => {
            println!("{:<12} {:>14} {:>9} {:>9} {:>9}  admissible", "rate", "value", "T^", "V^", "lnT^");
            for (kind, v) in theory_table(family, horizon, vt, d, nu)? {
                println!(
                    "{:<12} {:>14.6e} {:>9.5} {:>9.5} {:>9.5}  {}",
                    kind.label(),
                    v.value,
                    v.exponents.horizon,
                    v.exponents.variation,
                    v.exponents.log,
                    v.admissible
                );
            }
        }
        Command::Mig {
            family,
            grid,
            rounds,
            dim,
            lengthscale,
            nu,
            lambda,
        } => {
            let spec = KernelSpec::new(family, lengthscale, (family == KernelFamily::Matern).then_some(nu))?;
            let grid = Grid::new(dim, grid)?;
            let bound = greedy_mig_bound(&spec, lambda, grid.points(), rounds)?;
            println!("{bound}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, nskb::Error::Config { .. }) {
                eprintln!("(the master seed may also be set through {SEED_ENV_VAR})");
            }
            ExitCode::FAILURE
        }
    }
}
