mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flowlump::corpus::RateMode;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "flowlump", version, about = "Sparse memory models and maps of pathway data")]
struct Cli {
    /// Worker threads (default: available parallelism); FLOWLUMP_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report errors as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the fixed-order state network of a paths file.
    Build(BuildArgs),
    /// Lump the state network into per-node dendrograms.
    Lump(LumpArgs),
    /// Map a lumped model of a given size.
    Cluster(ClusterArgs),
    /// Select the model size by cross-validation and map the selected model.
    Cv(CvArgs),
    /// Persistence, overlap, classification agreement and state allocation.
    Metrics(MetricsArgs),
    /// Export a map for rendering.
    Export(ExportArgs),
    /// Generate a synthetic corpus with memory at hub nodes.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutputArgs {
    /// Directory for all artifacts.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// File stem of the artifacts (default: stem of the main input).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CorpusArgs {
    /// Paths file.
    pub input: PathBuf,
    /// Markov order of the state network.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Data lines start with a group key.
    #[arg(long)]
    pub grouped: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Empirical,
    Stationary,
}

impl From<Mode> for RateMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Empirical => RateMode::Empirical,
            Mode::Stationary => RateMode::Stationary,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MapArgs {
    /// Optimizer trials.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Optimizer seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Visit rates from link weights or from the stationary distribution.
    #[arg(long, value_enum, default_value_t = Mode::Empirical)]
    pub mode: Mode,
    /// Keep a flat two-level map instead of searching for nested modules.
    #[arg(long)]
    pub two_level: bool,
    /// Deepest module nesting of the hierarchical search.
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BuildArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LumpArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Also write the lumped model with this many states.
    #[arg(long)]
    pub target_r: Option<usize>,
    /// Exhaustive candidate search for every node, however many states it has.
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Dendrograms from an earlier `lump` run on the same input and order.
    #[arg(long)]
    pub dendro: Option<PathBuf>,
    /// Number of lumped states (default: all states).
    #[arg(long)]
    pub target_r: Option<usize>,
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Seed of the fold split and of the per-fold optimizer runs.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Optimizer trials per fold and model size.
    #[arg(long, default_value_t = 3)]
    pub fold_trials: usize,
    /// Growth factor of the model-size schedule.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub schedule_factor: f64,
    /// Explicit comma-separated model sizes, starting at the physical node count.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<usize>>,
    /// Evaluate the whole schedule instead of stopping past the minimum.
    #[arg(long)]
    pub no_early_stop: bool,
    /// Not allowed: cross-validation chooses the model size.
    #[arg(long)]
    pub target_r: Option<usize>,
    #[arg(long)]
    pub exact: bool,
    /// Optimizer trials of the final map of the selected model.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = Mode::Empirical)]
    pub mode: Mode,
    /// Keep the final map flat.
    #[arg(long)]
    pub two_level: bool,
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl CvArgs {
    /// Settings of the final map; its optimizer seed is the cross-validation seed.
    pub fn final_map(&self) -> MapArgs {
        MapArgs {
            trials: self.trials,
            seed: self.seed,
            mode: self.mode,
            two_level: self.two_level,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricsArgs {
    /// State network the map refers to (`.snet`).
    #[arg(long)]
    pub network: PathBuf,
    /// Map of the network (`.tree`).
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// External classification, `name<TAB>category` per line.
    #[arg(long, requires = "map")]
    pub classification: Option<PathBuf>,
    /// Smallest share of a node's flow listed in the overlap table.
    #[arg(long, default_value_t = 0.0)]
    pub overlap_threshold: f64,
    /// Smallest share of total flow for a module to be counted.
    #[arg(long, default_value_t = flowlump::metrics::MODULE_FLOW_THRESHOLD)]
    pub module_threshold: f64,
    /// Dendrograms of `--network` for the state allocation table.
    #[arg(long)]
    pub dendro: Option<PathBuf>,
    /// Model sizes of the allocation table (default: the geometric schedule).
    #[arg(long, value_delimiter = ',', requires = "dendro")]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub schedule_factor: f64,
    #[arg(long, value_enum, default_value_t = Mode::Empirical)]
    pub mode: Mode,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExportArgs {
    /// State network the map refers to (`.snet`).
    #[arg(long)]
    pub network: PathBuf,
    /// Map to export (`.tree`).
    #[arg(long)]
    pub map: PathBuf,
    /// Write the JSON module summary (the default format).
    #[arg(long)]
    pub json: bool,
    /// Write a per-module TSV.
    #[arg(long)]
    pub tsv: bool,
    #[arg(long, value_enum, default_value_t = Mode::Empirical)]
    pub mode: Mode,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthArgs {
    /// Physical nodes, hubs included.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub modules: usize,
    #[arg(long, default_value_t = 4)]
    pub planted_hubs: usize,
    /// Probability that a step out of a hub returns to the origin module.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// Probability that a step out of a non-hub enters a hub.
    #[arg(long, default_value_t = 0.05)]
    pub hub_prob: f64,
    /// Nodes per path.
    #[arg(long, default_value_t = 3)]
    pub path_len: usize,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if json_errors && e.use_stderr() {
                let msg = serde_json::json!({"error": {"kind": "usage", "message": e.to_string().trim()}});
                eprintln!("{msg}");
                return ExitCode::from(2);
            }
            e.exit();
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json_errors {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                let msg = serde_json::json!({"error": {"kind": error_kind(&e), "message": e.to_string(), "chain": chain}});
                eprintln!("{msg}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let threads = thread_count(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("cannot start the worker pool")?;
    match &cli.command {
        Command::Build(a) => commands::build(a, threads),
        Command::Lump(a) => commands::lump(a, threads),
        Command::Cluster(a) => commands::cluster(a, threads),
        Command::Cv(a) => commands::cv(a, threads),
        Command::Metrics(a) => commands::metrics(a, threads),
        Command::Export(a) => commands::export(a, threads),
        Command::Synth(a) => commands::synth(a, threads),
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    let n = match std::env::var("FLOWLUMP_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("FLOWLUMP_THREADS is not a thread count: {v:?}"))?,
        _ => match flag {
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        bail!("thread count must be at least 1");
    }
    Ok(n)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use flowlump::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Io(_) => "io",
                E::EmptyCorpus | E::AllLinesRejected(_) | E::Format { .. } => "input",
                E::InvalidOrder(_) | E::InvalidParameter(_) | E::InvalidSchedule(_) => "parameter",
                E::StateCountOutOfRange { .. } => "state_count",
                E::TooManyFolds { .. } | E::TooFewValidFolds { .. } | E::NoProjectableFlow => "cross_validation",
                E::NoUsableWindows { .. } | E::Dangling(_) | E::SupportMismatch(_) => "model",
                E::ZeroCoverage => "classification",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<commands::Usage>().is_some() {
            return "usage";
        }
    }
    "error"
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
