//! `fedsurv` — synthetic federated survival analysis experiments.
//!
//! Subcommands: `gen` (write synthetic center cohorts), `fit` (single CoxPH
//! fit), `run` (federated experiment from a config file), `converge`
//! (contraction check of synchronized gradient rounds) and `bench` (timing
//! sweep). Exit codes: 0 success, 2 input error, 1 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedsurv::datagen::{self, SimulationConfig};
use fedsurv::federation::{self, centers_from_datasets, GradientModeOptions, StartPoint};
use fedsurv::io::{self, Algorithm, ExperimentConfig};
use fedsurv::survival::{self, FitOptions};

#[derive(Parser)]
#[command(
    name = "fedsurv",
    version,
    about = "Federated survival analysis experiments"
)]
struct Cli {
    /// Suppress the human-readable tables on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (flat `key = value`; see README).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for result CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic center cohorts as CSV files.
    Gen(ConfigArgs),
    /// Fit a Cox model on one dataset CSV and print coefficients and
    /// concordance.
    Fit {
        /// Dataset CSV (columns: time, event, features...).
        #[arg(long)]
        input: PathBuf,
        /// Ridge penalty added to the negative log partial likelihood.
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
    },
    /// Run the federated experiment described by the config.
    Run(ConfigArgs),
    /// Verify the contraction of synchronized gradient rounds on a
    /// shared-feature federation.
    Converge {
        #[command(flatten)]
        common: ConfigArgs,
        /// Learning rate; defaults to 0.5·μ/L² from curvature estimates.
        #[arg(long)]
        eta: Option<f64>,
        /// Gradient rounds to run.
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        /// Ridge penalty (> 0) supplying the strong-convexity floor.
        #[arg(long, default_value_t = 1.0)]
        ridge: f64,
    },
    /// Wall-clock sweep of the three algorithms over cluster counts.
    Bench {
        #[command(flatten)]
        common: ConfigArgs,
        /// Center counts to sweep, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 25, 50])]
        centers: Vec<usize>,
        /// IFCA round budget.
        #[arg(long, default_value_t = 5)]
        rounds: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(cli: &Cli) -> fedsurv::Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(args, cli.quiet),
        Command::Fit { input, ridge } => cmd_fit(input, *ridge, cli.quiet),
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::Converge {
            common,
            eta,
            iterations,
            ridge,
        } => cmd_converge(common, *eta, *iterations, *ridge, cli.quiet),
        Command::Bench {
            common,
            centers,
            rounds,
        } => cmd_bench(common, centers, *rounds, cli.quiet),
    }
}

fn load_config(args: &ConfigArgs) -> fedsurv::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.simulation = SimulationConfig::new(
            config.simulation.n_centers,
            config.simulation.rows_min,
            config.simulation.rows_max,
            config.simulation.p_total,
            config.simulation.n_common,
            config.simulation.baseline_lambda,
            seed,
        )
        .with_censor_bound(config.simulation.censor_bound);
    }
    if let Some(out) = &args.out {
        config.output_path = Some(out.clone());
    }
    Ok(config)
}

fn ensure_out_dir(config: &ExperimentConfig) -> fedsurv::Result<PathBuf> {
    let dir = config
        .output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| fedsurv::Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> fedsurv::Result<()> {
    std::fs::write(path, text).map_err(|e| fedsurv::Error::io(path.display().to_string(), e))
}

fn cmd_gen(args: &ConfigArgs, quiet: bool) -> fedsurv::Result<()> {
    let config = load_config(args)?;
    let dir = ensure_out_dir(&config)?;
    let datasets = datagen::generate_federation(&config.simulation)?;
    for (i, dataset) in datasets.iter().enumerate() {
        let path = dir.join(format!("center_{i:03}.csv"));
        io::save_dataset(dataset, &path)?;
    }
    // True coefficients for downstream checks.
    let mut beta_csv = String::from("feature,beta\n");
    for (feature, beta) in &config.simulation.true_beta {
        beta_csv.push_str(&format!("{feature},{beta}\n"));
    }
    write_text(&dir.join("true_beta.csv"), &beta_csv)?;
    if !quiet {
        println!(
            "wrote {} centers ({}..{} rows, {} features, {} common) to {}",
            datasets.len(),
            config.simulation.rows_min,
            config.simulation.rows_max,
            config.simulation.p_total,
            config.simulation.n_common,
            dir.display()
        );
    }
    Ok(())
}

fn cmd_fit(input: &Path, ridge: f64, quiet: bool) -> fedsurv::Result<()> {
    let dataset = io::load_dataset(input)?;
    let model = survival::fit_cox(
        &dataset,
        &FitOptions {
            ridge_lambda: ridge,
            ..FitOptions::default()
        },
    )?;
    let beta = model.coefficient_vector(&dataset);
    let cindex = survival::concordance_index(&dataset, beta.view())?;
    if !quiet {
        println!(
            "subjects: {}  events: {}  converged: {}  iterations: {}  loss: {}",
            dataset.n_subjects(),
            dataset.n_events(),
            model.converged,
            model.iterations,
            model.final_loss
        );
        for (feature, value) in &model.coefficients {
            println!("beta[{feature}] = {value}");
        }
        println!("concordance = {cindex}");
    }
    Ok(())
}

fn cmd_run(args: &ConfigArgs, quiet: bool) -> fedsurv::Result<()> {
    let config = load_config(args)?;
    let dir = ensure_out_dir(&config)?;
    match config.algorithm {
        Algorithm::Event => {
            let (table, detail) = io::run_event_experiment(&config)?;
            write_text(&dir.join("event.csv"), &table.to_csv())?;
            let rows: Vec<_> = detail
                .iter()
                .map(|(rep, c, alg, report)| (*rep, *c, *alg, report))
                .collect();
            write_text(&dir.join("rounds.csv"), &io::round_reports_csv(&rows))?;
            if !quiet {
                print!("{}", table.to_csv());
                println!("wrote event.csv and rounds.csv to {}", dir.display());
            }
        }
        _ => {
            let (table, detail) = io::run_improvement_experiment(&config)?;
            write_text(&dir.join("improvement.csv"), &table.to_csv())?;
            let rows: Vec<_> = detail
                .iter()
                .map(|(rep, c, alg, report)| (*rep, *c, *alg, report))
                .collect();
            write_text(&dir.join("rounds.csv"), &io::round_reports_csv(&rows))?;
            if !quiet {
                print!("{}", table.to_csv());
                println!("wrote improvement.csv and rounds.csv to {}", dir.display());
            }
        }
    }
    Ok(())
}

fn cmd_converge(
    args: &ConfigArgs,
    eta: Option<f64>,
    iterations: usize,
    ridge: f64,
    quiet: bool,
) -> fedsurv::Result<()> {
    let config = load_config(args)?;
    // Shared feature space: every feature common to every center.
    let sim = SimulationConfig::new(
        config.simulation.n_centers.min(5),
        config.simulation.rows_min,
        config.simulation.rows_max,
        config.simulation.n_common.max(2),
        config.simulation.n_common.max(2),
        config.simulation.baseline_lambda,
        config.simulation.seed,
    );
    let centers = centers_from_datasets(datagen::generate_federation(&sim)?);
    let run = federation::run_gradient_mode(
        &centers,
        &GradientModeOptions {
            eta: eta.or(config.eta),
            iterations,
            ridge_lambda: ridge,
            start: StartPoint::Zero,
        },
    )?;

    if !quiet {
        println!(
            "eta = {}  mu = {}  L = {}  contraction factor = {}",
            run.eta, run.mu, run.lipschitz, run.contraction_factor
        );
        if !run.within_guarantee {
            println!(
                "warning: eta is outside the guarantee region (needs eta < mu/L^2 = {})",
                run.mu / (run.lipschitz * run.lipschitz)
            );
        }
        println!("iteration,distance,bound");
        for (t, d) in run.distances.iter().enumerate() {
            println!("{t},{d},{}", run.bound_at(t).sqrt());
        }
    }
    if let Some(dir) = &config.output_path {
        std::fs::create_dir_all(dir)
            .map_err(|e| fedsurv::Error::io(dir.display().to_string(), e))?;
        let mut csv = String::from("iteration,distance,bound\n");
        for (t, d) in run.distances.iter().enumerate() {
            csv.push_str(&format!("{t},{d},{}\n", run.bound_at(t).sqrt()));
        }
        write_text(&dir.join("trajectory.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_bench(
    args: &ConfigArgs,
    centers: &[usize],
    rounds: usize,
    quiet: bool,
) -> fedsurv::Result<()> {
    let config = load_config(args)?;
    let dir = ensure_out_dir(&config)?;
    for &n_centers in centers {
        let sim = SimulationConfig::new(
            n_centers,
            config.simulation.rows_min,
            config.simulation.rows_max,
            config.simulation.p_total,
            config.simulation.n_common,
            config.simulation.baseline_lambda,
            config.simulation.seed,
        )
        .with_censor_bound(config.simulation.censor_bound);
        let table = io::run_bench_sweep(&sim, &config.clusters.values(), rounds, config.seed)?;
        let name = format!("timing_{n_centers}centers.csv");
        write_text(&dir.join(&name), &table.to_csv())?;
        if !quiet {
            println!("== {n_centers} centers ==");
            print!("{}", table.to_csv());
            println!("wrote {name} to {}", dir.display());
        }
    }
    Ok(())
}
