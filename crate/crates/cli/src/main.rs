//! `fbcap`: train, extract, bound and code on unifilar finite-state channels.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;
use output::CliError;

#[derive(Parser, Debug)]
#[command(name = "fbcap", version, about = "Feedback capacity experiments on unifilar finite-state channels")]
struct Cli {
    /// TOML or JSON config; a previous result record also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `ising:<k>` or a channel config file.
    #[arg(long, global = true)]
    channel: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a DDPG policy on the belief MDP.
    Train(TrainArgs),
    /// Estimate the average reward of a saved policy.
    Evaluate(EvaluateArgs),
    /// Build a Q-graph from a saved policy's rollouts.
    Extract(ExtractArgs),
    /// Maximize the Q-graph upper bound and test tightness.
    Bound(BoundArgs),
    /// Closed-form Ising rate maximization.
    Formula(FormulaArgs),
    /// Grid value iteration on a binary-state channel.
    Baseline(BaselineArgs),
    /// Simulate the zero-error Ising feedback code.
    Code(CodeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Extract(_) => "extract",
            Command::Bound(_) => "bound",
            Command::Formula(_) => "formula",
            Command::Baseline(_) => "baseline",
            Command::Code(_) => "code",
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    steps_per_episode: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_decay: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    batch_norm: Option<bool>,
    #[arg(long)]
    target_networks: Option<bool>,
    #[arg(long)]
    target_tau: Option<f64>,
    #[arg(long)]
    critic_on_policy_action: Option<bool>,
    #[arg(long)]
    warmup: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Training checkpoint or Q-graph file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Training checkpoint or Q-graph file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Clustering radii, comma separated.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Q-graph file written by `extract`.
    #[arg(long)]
    qgraph: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tight_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct FormulaArgs {
    /// Alphabet size.
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    belief_nodes: Option<usize>,
    #[arg(long)]
    action_points: Option<usize>,
    #[arg(long)]
    refine_points: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
}

#[derive(Args, Debug)]
struct CodeArgs {
    #[arg(long)]
    k: Option<usize>,
    /// Stay probability; defaults to the rate-optimal value.
    #[arg(long)]
    p: Option<f64>,
    /// Message length in bits.
    #[arg(long)]
    bits: Option<usize>,
    /// Choose the message length to yield about this many symbols.
    #[arg(long, conflicts_with = "bits")]
    symbols: Option<usize>,
    /// Write the per-symbol CSV trace.
    #[arg(long)]
    trace: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Config file first, then flags.
fn resolve(cli: Cli) -> Result<(ExperimentConfig, Command), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out);
    set(&mut cfg.channel, cli.channel);
    match &cli.command {
        Command::Train(a) => {
            let t = &mut cfg.train;
            set(&mut t.episodes, a.episodes);
            set(&mut t.steps_per_episode, a.steps_per_episode);
            set(&mut t.epsilon, a.epsilon);
            set(&mut t.epsilon_decay, a.epsilon_decay);
            set(&mut t.discount, a.discount);
            set(&mut t.minibatch, a.minibatch);
            set(&mut t.actor_lr, a.actor_lr);
            set(&mut t.critic_lr, a.critic_lr);
            set(&mut t.buffer_capacity, a.buffer_capacity);
            set(&mut t.hidden, a.hidden.clone());
            set(&mut t.batch_norm, a.batch_norm);
            set(&mut t.target_networks, a.target_networks);
            set(&mut t.target_tau, a.target_tau);
            set(&mut t.critic_on_policy_action, a.critic_on_policy_action);
            set(&mut t.warmup, a.warmup);
        }
        Command::Evaluate(a) => {
            let e = &mut cfg.evaluate;
            if a.checkpoint.is_some() {
                e.checkpoint = a.checkpoint.clone();
            }
            set(&mut e.steps, a.steps);
            set(&mut e.burn_in, a.burn_in);
        }
        Command::Extract(a) => {
            let e = &mut cfg.extract;
            if a.checkpoint.is_some() {
                e.checkpoint = a.checkpoint.clone();
            }
            set(&mut e.radii, a.radii.clone());
            set(&mut e.steps, a.steps);
            set(&mut e.burn_in, a.burn_in);
        }
        Command::Bound(a) => {
            let b = &mut cfg.bound;
            if a.qgraph.is_some() {
                b.qgraph = a.qgraph.clone();
            }
            set(&mut b.restarts, a.restarts);
            set(&mut b.tol, a.tol);
            set(&mut b.max_iterations, a.max_iterations);
            set(&mut b.tight_tol, a.tight_tol);
        }
        Command::Formula(a) => set(&mut cfg.formula.k, a.k),
        Command::Baseline(a) => {
            let g = &mut cfg.baseline;
            set(&mut g.belief_nodes, a.belief_nodes);
            set(&mut g.action_points, a.action_points);
            set(&mut g.refine_points, a.refine_points);
            set(&mut g.max_sweeps, a.max_sweeps);
            set(&mut g.tol, a.tol);
            set(&mut g.damping, a.damping);
        }
        Command::Code(a) => {
            let c = &mut cfg.code;
            set(&mut c.k, a.k);
            if a.p.is_some() {
                c.p = a.p;
            }
            set(&mut c.bits, a.bits);
            c.trace |= a.trace;
            if let Some(n) = a.symbols {
                c.bits = commands::bits_for_symbols(c, n)?;
            }
        }
    }
    // the master seed drives training too
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok((cfg, cli.command))
}

/// Runs the command and returns its result record.
fn run(cfg: &ExperimentConfig, command: &Command) -> Result<serde_json::Value, CliError> {
    match command {
        Command::Train(_) => commands::train(cfg),
        Command::Evaluate(_) => commands::evaluate(cfg),
        Command::Extract(_) => commands::extract_cmd(cfg),
        Command::Bound(_) => commands::bound(cfg),
        Command::Formula(_) => commands::formula(cfg),
        Command::Baseline(_) => commands::baseline(cfg),
        Command::Code(_) => commands::code(cfg),
    }
}

fn fail(command: &str, err: &CliError) -> ExitCode {
    eprintln!("{}", err.to_json(command));
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                e.exit();
            }
            let err = CliError { kind: "usage", message: e.to_string().trim().to_string(), details: json!(null) };
            return fail("fbcap", &err);
        }
    };
    let name = cli.command.name();
    let (cfg, command) = match resolve(cli) {
        Ok(v) => v,
        Err(e) => return fail(name, &e),
    };
    match run(&cfg, &command) {
        Ok(record) => {
            println!("{}", record["result"]);
            ExitCode::SUCCESS
        }
        Err(e) => fail(name, &e),
    }
}
