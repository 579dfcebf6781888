use clap::{Args, Parser, Subcommand};
use functorium_cli::{cmd_demo, cmd_eval, cmd_train, cmd_validate, thread_cap, RunConfig};
use std::path::PathBuf;

/// Train and inspect families of networks declared by a schema: objects,
/// arrows, and path equations that the training enforces.
#[derive(Parser)]
#[command(name = "functorium", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SharedFlags {
    /// Built-in task name (cyclegan-toy | product-toy).
    #[arg(long)]
    task: Option<String>,
    /// Schema DSL file (alternative to --task).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Directory of per-object CSV datasets (with --schema).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed for data generation and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Generator updates to run.
    #[arg(long)]
    steps: Option<usize>,
    /// Path-equivalence weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Gradient-penalty weight.
    #[arg(long)]
    lambda_gp: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Std of the Gaussian parameter init.
    #[arg(long)]
    init_std: Option<f64>,
    /// Adam step size.
    #[arg(long)]
    alpha: Option<f64>,
    /// Points per domain for built-in task generation.
    #[arg(long)]
    points: Option<usize>,
    /// Hidden widths of generator MLPs, comma-separated.
    #[arg(long)]
    gen_hidden: Option<String>,
    /// Hidden widths of critic MLPs, comma-separated.
    #[arg(long)]
    critic_hidden: Option<String>,
    /// Write a checkpoint every K steps (0 = only at the end).
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Held-out sample count for evaluation metrics.
    #[arg(long)]
    n_eval: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a schema file and report its structure and normal forms.
    Validate {
        /// Schema DSL file.
        schema: PathBuf,
    },
    /// Train on a built-in task or a schema + CSV dataset.
    Train {
        #[command(flatten)]
        flags: SharedFlags,
    },
    /// Evaluate a checkpoint against a task; writes metrics and plots.
    Eval {
        /// Checkpoint file written by `train`.
        checkpoint: PathBuf,
        #[command(flatten)]
        flags: SharedFlags,
    },
    /// Generate data, train with task presets, and write a full report.
    Demo {
        /// Built-in task name (cyclegan-toy | product-toy).
        #[arg(id = "demo_task", value_name = "TASK")]
        task: String,
        #[command(flatten)]
        flags: SharedFlags,
    },
}

fn build_config(flags: &SharedFlags) -> Result<RunConfig, functorium_cli::CliError> {
    let file_cfg = match &flags.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let mut flag_cfg = RunConfig {
        task: flags.task.clone(),
        schema: flags.schema.clone(),
        data: flags.data.clone(),
        out: flags.out.clone(),
        seed: flags.seed,
        steps: flags.steps,
        gamma: flags.gamma,
        lambda_gp: flags.lambda_gp,
        batch: flags.batch,
        init_std: flags.init_std,
        alpha: flags.alpha,
        points: flags.points,
        checkpoint_every: flags.checkpoint_every,
        n_eval: flags.n_eval,
        ..RunConfig::default()
    };
    if let Some(widths) = &flags.gen_hidden {
        flag_cfg.set("gen_hidden", widths)?;
    }
    if let Some(widths) = &flags.critic_hidden {
        flag_cfg.set("critic_hidden", widths)?;
    }
    Ok(file_cfg.merged_under(flag_cfg))
}

fn run() -> Result<(), functorium_cli::CliError> {
    let _threads = thread_cap()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { schema } => cmd_validate(&schema),
        Command::Train { flags } => cmd_train(&build_config(&flags)?),
        Command::Eval { checkpoint, flags } => cmd_eval(&checkpoint, &build_config(&flags)?),
        Command::Demo { task, flags } => cmd_demo(&task, &build_config(&flags)?),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
