use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use seqbid::continuous::{solve_grid, GridStrategy, HybridValueFunction, MaximizerConfig};
use seqbid::discrete::{solve_discrete, BidTable};
use seqbid::experiment::{run_experiment_suite, ExperimentConfig};
use seqbid::sim::{estimate_policy_value, GreedyBidder};
use seqbid::{validate_problem, Mode as SpecMode, ProblemSpec};

#[derive(Parser)]
#[command(
    name = "seqbid",
    version,
    about = "Bidding in sequential auctions for complementary resources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    Discrete,
    Grid,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the value function.
    Solve {
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "grid")]
        mode: Mode,
        /// fixed:<g>, vg1:<maxKnots>,<threshold> or vg2:<maxKnots>,<threshold>
        #[arg(long, default_value = "fixed:10")]
        grid: GridStrategy,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Accepted for uniformity; solving is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the value of a solved policy by simulation.
    Simulate {
        spec: PathBuf,
        /// solution.csv written by `solve`
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the experiment suite.
    Experiment {
        /// JSON config file, or `default`
        #[arg(long, default_value = "default")]
        config: String,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_spec(path: &Path) -> Result<ProblemSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ProblemSpec::from_json(&text)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn solve(spec_path: &Path, mode: Mode, grid: GridStrategy, out: &Path) -> Result<()> {
    let spec = read_spec(spec_path)?;
    fs::create_dir_all(out)?;
    match mode {
        Mode::Discrete => {
            let spec = match spec.mode {
                SpecMode::Discrete => spec,
                SpecMode::Continuous => spec.discrete_twin()?,
            };
            let sol = solve_discrete(&validate_problem(&spec)?)?;
            sol.write_csv(create(&out.join("solution.csv"))?)?;
            println!(
                "start value {:.6}, bid {}",
                sol.start_value(),
                sol.start_bid()
            );
            println!("states {}", sol.state_count());
        }
        Mode::Grid => {
            let problem = validate_problem(&spec)?;
            let sol = solve_grid(&problem, &grid, &MaximizerConfig::default())?;
            sol.values.write_csv(create(&out.join("solution.csv"))?)?;
            sol.ledger.write_csv(create(&out.join("ledger.csv"))?)?;
            let start = sol
                .values
                .eval(0, seqbid::Holdings::EMPTY, problem.endowment())?;
            println!(
                "start value {start:.6} (estimated error bound {:.6})",
                sol.ledger.error_bound(0)?
            );
            println!("states {}", sol.state_count);
        }
    }
    log::info!("wrote {}", out.display());
    Ok(())
}

fn simulate(spec_path: &Path, policy: &Path, rounds: usize, seed: u64) -> Result<()> {
    let spec = read_spec(spec_path)?;
    let header = {
        let mut line = String::new();
        BufReader::new(
            File::open(policy).with_context(|| format!("opening {}", policy.display()))?,
        )
        .read_line(&mut line)?;
        line.trim().to_string()
    };
    let est = if header.contains("knot_endowment") {
        let problem = validate_problem(&spec)?;
        let values = HybridValueFunction::read_csv(File::open(policy)?)?;
        if values.n() != problem.n() {
            bail!(
                "policy has {} auctions, instance has {}",
                values.n(),
                problem.n()
            );
        }
        let bidder = GreedyBidder {
            values: &values,
            problem: &problem,
            cfg: MaximizerConfig::default(),
        };
        estimate_policy_value(&problem, &bidder, rounds, seed)?
    } else {
        let spec = match spec.mode {
            SpecMode::Discrete => spec,
            SpecMode::Continuous => spec.discrete_twin()?,
        };
        let problem = validate_problem(&spec)?;
        let table = BidTable::read_csv(File::open(policy)?)?;
        if table.n() != problem.n() {
            bail!(
                "policy has {} auctions, instance has {}",
                table.n(),
                problem.n()
            );
        }
        estimate_policy_value(&problem, &table, rounds, seed)?
    };
    println!(
        "mean {:.6} stderr {:.6} rounds {rounds}",
        est.mean, est.stderr
    );
    Ok(())
}

fn experiment(config: &str, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = if config == "default" {
        ExperimentConfig::default()
    } else {
        let text = fs::read_to_string(config).with_context(|| format!("reading {config}"))?;
        ExperimentConfig::from_json(&text)?
    };
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let report = run_experiment_suite(&cfg)?;
    println!(
        "{:<10} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "run", "states", "mean_sq_v", "max_sq_v", "mean_sq_p", "max_sq_p"
    );
    for r in &report.table {
        println!(
            "{:<10} {:>10.1} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.run,
            r.states,
            r.mean_sq_value_error,
            r.mean_max_sq_value_error,
            r.mean_sq_policy_error,
            r.mean_max_sq_policy_error
        );
    }
    if !report.failures.is_empty() {
        eprintln!(
            "{} experiment(s) failed; see manifest.json",
            report.failures.len()
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve {
            spec,
            mode,
            grid,
            out,
            ..
        } => solve(&spec, mode, grid, &out),
        Command::Simulate {
            spec,
            policy,
            rounds,
            seed,
        } => simulate(&spec, &policy, rounds, seed),
        Command::Experiment { config, seed, out } => experiment(&config, seed, out),
    }
}
