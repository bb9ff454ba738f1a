use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grouprec::Format;

mod commands;
mod config;
mod svg;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "grouprec", version, about = "Multi-view consensus group recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter a raw dataset and write it in canonical form.
    Prepare(PrepareArgs),
    /// Train a model and write a checkpoint plus a JSONL training log.
    Train(TrainArgs),
    /// Score held-out queries and write HR/NDCG records as JSONL.
    Evaluate(EvaluateArgs),
    /// Dump an embedding table as CSV, optionally with a 2-D scatter plot.
    ExportEmbeddings(ExportArgs),
    /// Time training, the forward pass and scoring of growing workloads.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "canonical", value_parser = parse_format)]
    format: Format,
    #[arg(long, default_value_t = 2)]
    min_members: usize,
    #[arg(long, default_value_t = 3)]
    min_group_items: usize,
}

/// Flags shared by every command that resolves a run configuration.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_neg_eval: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    n_neg_train: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    group_self_loops: Option<bool>,
    /// Force a view's gate to zero; repeatable.
    #[arg(long, value_enum)]
    disable_view: Vec<View>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "both")]
    task: TaskArg,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Metrics file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    table: Table,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,1")]
    dims: Vec<usize>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000,10000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum View {
    Member,
    Item,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Group,
    User,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Popularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    Items,
    Groups,
    Users,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

impl RunArgs {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            data: self.data.clone(),
            format: self.format,
            seed: self.seed,
            n_neg_eval: self.n_neg_eval,
            ..Default::default()
        }
    }
}

impl TrainArgs {
    fn overrides(&self, base: &RunConfig) -> RunConfig {
        let views = (!self.disable_view.is_empty()).then(|| {
            let mut v = base.views.unwrap_or_default();
            for view in &self.disable_view {
                match view {
                    View::Member => v.member = false,
                    View::Item => v.item = false,
                    View::Group => v.group = false,
                }
            }
            v
        });
        RunConfig {
            output: self.output.clone(),
            dim: self.dim,
            layers: self.layers,
            n_neg_train: self.n_neg_train,
            lr: self.lr,
            epochs: self.epochs,
            eval_every: self.eval_every,
            patience: self.patience,
            group_self_loops: self.group_self_loops,
            views,
            ks: self.k.clone(),
            ..self.run.overrides()
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or output locations.
    Usage(String),
    Lib(grouprec::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Lib(grouprec::Error::Config(_)) => 1,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => e.fmt(f),
        }
    }
}

impl From<grouprec::Error> for CliError {
    fn from(e: grouprec::Error) -> Self {
        CliError::Lib(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(a) => commands::prepare(&a.input, a.format, &a.output, a.min_members, a.min_group_items),
        Command::Train(a) => {
            let base = RunConfig::load_optional(a.run.config.as_deref())?;
            let top = a.overrides(&base);
            commands::train(base.overlay(top).with_env_seed()?)
        }
        Command::Evaluate(a) => {
            let top = RunConfig {
                ks: a.k.clone(),
                ..a.run.overrides()
            };
            let tasks = match a.task {
                TaskArg::Group => vec![grouprec::Task::Group],
                TaskArg::User => vec![grouprec::Task::User],
                TaskArg::Both => vec![grouprec::Task::Group, grouprec::Task::User],
            };
            let popularity = a.baseline == Some(Baseline::Popularity);
            commands::evaluate(&a.checkpoint, a.run.config.as_deref(), top, &tasks, popularity, a.out.as_deref())
        }
        Command::ExportEmbeddings(a) => {
            let table = match a.table {
                Table::Items => commands::EmbeddingTable::Items,
                Table::Groups => commands::EmbeddingTable::Groups,
                Table::Users => commands::EmbeddingTable::Users,
            };
            commands::export_embeddings(&a.checkpoint, table, &a.out, a.svg.as_deref(), &a.dims)
        }
        Command::Profile(a) => commands::profile(
            &a.checkpoint,
            a.run.config.as_deref(),
            a.run.overrides(),
            &a.sizes,
            a.repeats,
            a.out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
