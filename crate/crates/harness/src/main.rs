use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use steel_core::envs::tabular::{grid, TabularConfig, TabularEnv};
use steel_core::envs::MazeLayout;
use steel_core::mixing::{exact_tmix, product_chain_tmix_bound, FiniteChain};
use steel_core::{compute_budgets, required_count_d, steel_learn, AlgoParams, CoordinateClass};
use steel_harness::eval::{evaluate_dynamics, evaluate_encoder};
use steel_harness::{run_experiment, ExperimentConfig};

/// Learn the latent dynamics and encoder of an Ex-BMDP from one trajectory.
#[derive(Parser)]
#[command(name = "steel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicates of an experiment config and write its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the replicate count of the config.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Print mixing-time values for a built-in environment family.
    Mixing {
        #[arg(long, value_enum)]
        env: MixingEnv,
        /// Observation width of the lock.
        #[arg(long = "L", default_value_t = 512)]
        width: usize,
        /// Number of binary noise factors of a tabular environment.
        #[arg(long, default_value_t = 6)]
        factors: usize,
        /// Total-variation threshold; defaults to 1/4, or 1/32 for the maze.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print the sample budgets for the given parameters.
    Budgets {
        #[arg(long = "N")]
        max_states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        class_size: usize,
        #[arg(long)]
        delta: f64,
        /// Diameter bound; defaults to N.
        #[arg(long = "D")]
        diameter: Option<usize>,
        #[arg(long, default_value_t = 40)]
        tmix: u64,
        #[arg(long, default_value_t = 1)]
        loop_len: usize,
        /// Learned state count used for d; defaults to N.
        #[arg(long)]
        states: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Also print the CycleFind budget for this cycle count.
        #[arg(long)]
        n_cyc: Option<usize>,
    },
    /// Learn a noisy 2x3 grid world and print the decision trace.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MixingEnv {
    Lock,
    Maze,
    Tabular,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEEL_LOG", "warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, replicates } => run(config, replicates),
        Command::Mixing {
            env,
            width,
            factors,
            threshold,
        } => report(mixing(env, width, factors, threshold)),
        Command::Budgets {
            max_states,
            actions,
            class_size,
            delta,
            diameter,
            tmix,
            loop_len,
            states,
            epsilon,
            n_cyc,
        } => {
            let params = AlgoParams {
                max_states,
                diameter_bound: diameter.unwrap_or(max_states),
                mixing_time_bound: tmix,
                delta,
                epsilon,
            };
            report(budgets(
                &params, actions, class_size, loop_len, states, n_cyc,
            ))
        }
        Command::Demo { seed } => report(demo(seed)),
    }
}

fn report(r: anyhow::Result<()>) -> ExitCode {
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(path: PathBuf, replicates: Option<usize>) -> ExitCode {
    let mut config = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = replicates {
        config.replicates = n;
    }
    let (records, summary) = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    for r in &records {
        println!(
            "replicate {:>3}  success={}  steps={}  min_acc={:.4}{}",
            r.replicate,
            r.success,
            r.total_steps,
            r.min_accuracy,
            r.error
                .as_deref()
                .map(|e| format!("  error: {e}"))
                .unwrap_or_default()
        );
    }
    println!(
        "{}: {}/{} succeeded, steps {:.1} +- {:.1}",
        summary.name, summary.successes, summary.replicates, summary.steps_mean, summary.steps_std
    );
    if summary.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn mixing(
    env: MixingEnv,
    width: usize,
    factors: usize,
    threshold: Option<f64>,
) -> anyhow::Result<()> {
    match env {
        MixingEnv::Lock | MixingEnv::Tabular => {
            let n = if matches!(env, MixingEnv::Lock) {
                width
            } else {
                factors
            };
            let threshold = threshold.unwrap_or(0.25);
            // flip rates in [0.1, 0.9] contract by at most |1 - 0.1 - 0.1|
            let bound = product_chain_tmix_bound(n, 0.8, threshold)?;
            println!("bound {bound}");
        }
        MixingEnv::Maze => {
            let threshold = threshold.unwrap_or(1.0 / 32.0);
            let chain = FiniteChain::new(MazeLayout::four_rooms().random_walk())?;
            println!("exact {}", exact_tmix(&chain, threshold)?);
        }
    }
    Ok(())
}

fn budgets(
    params: &AlgoParams,
    actions: usize,
    class_size: usize,
    loop_len: usize,
    states: Option<usize>,
    n_cyc: Option<usize>,
) -> anyhow::Result<()> {
    params.validate()?;
    let b = compute_budgets(params, actions, class_size, loop_len, n_cyc)?;
    println!("n_samp_cyc={}", b.n_samp_cyc);
    println!("n_samp={}", b.n_samp);
    println!("c_init={}", b.c_init);
    if let Some(c) = b.cycle {
        println!("c={}", c.c);
        println!("n0_prime={}", c.n0_prime);
    }
    let d = required_count_d(params, states.unwrap_or(params.max_states), class_size)?;
    println!("d={d}");
    Ok(())
}

fn demo(seed: u64) -> anyhow::Result<()> {
    let flip = |up: f64, down: f64| vec![vec![1.0 - up, up], vec![down, 1.0 - down]];
    let config = TabularConfig {
        transitions: grid(2, 3),
        noise_factors: vec![flip(0.3, 0.4), flip(0.5, 0.2)],
        initial_state: 0,
        noise_seed: seed,
    };
    let mut env = TabularEnv::new(config)?;
    let params = AlgoParams {
        max_states: 6,
        diameter_bound: 6,
        mixing_time_bound: 10,
        delta: 0.05,
        epsilon: 0.05,
    };
    let oracle = CoordinateClass::new(steel_core::Environment::obs_width(&env));
    let result = steel_learn(&mut env, &params, &oracle)?;
    for e in &result.trace {
        println!("{}", serde_json::to_string(e)?);
    }
    println!("learned transitions (rows: states, columns: U D L R):");
    for (s, row) in result.dynamics.to_table().iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|t| t.map_or("-".into(), |t| t.to_string()))
            .collect();
        println!("  {s}: {}", cells.join(" "));
    }
    let dynamics = evaluate_dynamics(&result.dynamics, &env, &result.datasets);
    let min_acc = dynamics
        .inverse()
        .map(|inv| evaluate_encoder(&result.encoder, &inv, &env, 2000, seed).min_accuracy);
    println!(
        "steps={} isomorphic={} min_accuracy={}",
        result.total_steps,
        dynamics.isomorphic,
        min_acc.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}
