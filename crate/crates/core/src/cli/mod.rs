//! Command-line front end.
//!
//! Every command writes under `--out` and prints a one-line summary. A
//! `--config` file holds `flag = value` lines using the long flag names of the
//! chosen command; flags given on the command line win.

mod commands;
pub mod store;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Parser)]
#[command(name = "linksight", version, about = "RSSI link anomaly classification via time-series images")]
pub struct Cli {
    /// Seed from which every random stream is derived.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Flat `flag = value` file supplying defaults for the command's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "LINKSIGHT_OUT", default_value = "out")]
    pub out: PathBuf,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic normal traces.
    Generate(GenerateArgs),
    /// Parse trace files into a dataset, dropping lossy traces.
    Ingest(IngestArgs),
    /// Inject anomalies into a normal corpus.
    Inject(InjectArgs),
    /// Render every trace of a dataset as an image.
    Transform(TransformArgs),
    /// Train a network on a whole dataset.
    Train(TrainArgs),
    /// Repeated split, train and evaluate.
    Eval(EvalArgs),
    /// Evaluate across anomaly shares.
    Sweep(SweepArgs),
    /// Classical time-series baseline.
    Baseline {
        #[command(subcommand)]
        method: BaselineMethod,
    },
    /// Guided-backpropagation saliency maps.
    Explain(ExplainArgs),
    /// Parameter, FLOP and energy report of a network.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    #[arg(long, default_value_t = crate::traces::DEFAULT_TRACE_LENGTH)]
    pub length: usize,
    #[arg(long, default_value_t = 40.0)]
    pub mean: f64,
    #[arg(long, default_value_t = 3.0)]
    pub stddev: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of trace files, read in file-name order.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = crate::traces::DEFAULT_TRACE_LENGTH)]
    pub length: usize,
    /// `complete` keeps traces without packet loss, `lossy` the others.
    #[arg(long, default_value = "complete")]
    pub keep: String,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    /// Dataset directory of normal traces.
    #[arg(long)]
    pub input: PathBuf,
    /// Injection plan file; defaults are scaled to the trace length.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Overrides the plan's affected fraction.
    #[arg(long)]
    pub fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// rp, gasf, gadf or snapshot.
    #[arg(long, default_value = "rp")]
    pub kind: String,
    /// pgm or csv.
    #[arg(long, default_value = "pgm")]
    pub format: String,
    /// Recurrence threshold; with it the plot is binary.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Image transform feeding the network.
    #[arg(long, default_value = "rp")]
    pub transform: String,
    /// Anomaly versus no anomaly instead of five classes.
    #[arg(long)]
    pub binary: bool,
    /// Filter counts of the four convolutions.
    #[arg(long, default_value = "128,64,32,16")]
    pub filters: String,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Comma-separated loss weight per class; default 0.1 for no anomaly and 1
    /// for the rest.
    #[arg(long)]
    pub class_weights: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// cnn or knn.
    #[arg(long, default_value = "cnn")]
    pub classifier: String,
    /// Neighbours for the knn classifier.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Sakoe-Chiba band radius for the knn classifier.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset directory of normal traces.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Comma-separated anomaly shares.
    #[arg(long, default_value = "0.01,0.03,0.10,0.20,0.33,0.50")]
    pub shares: String,
    /// Repeated splits per share.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Subcommand)]
pub enum BaselineMethod {
    /// k-nearest neighbours under dynamic time warping.
    Knn(KnnArgs),
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory whose traces are explained.
    #[arg(long)]
    pub input: PathBuf,
    /// `auto` for the predicted class, or an output index.
    #[arg(long, default_value = "auto")]
    pub class: String,
    #[arg(long, default_value = "pgm")]
    pub format: String,
    /// Explain only the first N traces.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Model directory; otherwise the topology comes from the flags below.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = crate::traces::DEFAULT_TRACE_LENGTH)]
    pub input_size: usize,
    #[arg(long, default_value = "128,64,32,16")]
    pub filters: String,
    #[arg(long)]
    pub binary: bool,
    /// Hardware efficiency used for the energy estimate.
    #[arg(long, default_value_t = crate::nn::DEFAULT_FLOPS_PER_WATT)]
    pub flops_per_watt: f64,
}

/// Flags of the innermost subcommand that `config` sets and the command line
/// does not, as extra arguments.
fn config_overrides(matches: &ArgMatches, config: &BTreeMap<String, String>) -> Result<Vec<OsString>> {
    let mut cmd = Cli::command();
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        cmd = cmd
            .find_subcommand(name)
            .cloned()
            .expect("matched subcommand exists");
        m = sub;
    }
    let mut extra = Vec::new();
    let mut used = vec![false; config.len()];
    let globals = Cli::command();
    let args = cmd.get_arguments().chain(globals.get_arguments());
    for arg in args {
        let Some(long) = arg.get_long() else { continue };
        let id = arg.get_id().as_str();
        let Some(pos) = config.keys().position(|k| k.replace('_', "-") == long) else {
            continue;
        };
        used[pos] = true;
        if long == "config" || m.value_source(id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let value = &config[config.keys().nth(pos).expect("position in range")];
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => extra.push(format!("--{long}").into()),
                "false" => {}
                other => return Err(Error::param("cli", format!("`{long}` expects true or false, got `{other}`"))),
            },
            _ => extra.push(format!("--{long}={value}").into()),
        }
    }
    for (key, _) in config.iter().zip(&used).filter(|(_, u)| !**u) {
        log::warn!("config key `{}` does not apply to this command", key.0);
    }
    Ok(extra)
}

/// Parses `argv`, folding in `--config` values. Usage errors come back as
/// clap errors.
pub fn parse(argv: Vec<OsString>) -> std::result::Result<Result<Cli>, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let Some(path) = &cli.config else {
        return Ok(Ok(cli));
    };
    let config = match store::read_string(path).and_then(|t| kv::parse(&t)) {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };
    let extra = match config_overrides(&matches, &config) {
        Ok(x) => x,
        Err(e) => return Ok(Err(e)),
    };
    let mut full = argv;
    full.extend(extra);
    let matches = Cli::command().try_get_matches_from(full)?;
    Ok(Ok(Cli::from_arg_matches(&matches)?))
}

/// Runs the command-line tool and returns its exit status.
pub fn main_with_args(argv: Vec<OsString>) -> i32 {
    let cli = match parse(argv) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) => {
            eprintln!("error [{}]: {e}", e.module());
            return 1;
        }
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.module());
            1
        }
    }
}
