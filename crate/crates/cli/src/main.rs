//! `uibrec` — train and analyze boundary-based recommenders from the terminal.
//!
//! Exit codes: 0 success; 2 bad input (config, data, or file problems);
//! 3 numeric failure (divergence or non-finite values).

mod artifacts;
mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::EvalArgs;
use config::Overrides;
use std::path::PathBuf;
use uibrec_core::dataset::HoldoutRole;
use uibrec_core::error::{DataError, EvalError, TrainError};
use uibrec_core::ExecMode;

/// An error paired with the process exit code it maps to.
pub struct Failure {
    pub code: i32,
    pub err: anyhow::Error,
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Bad input: exit 2.
pub fn input<E: Into<anyhow::Error>>(err: E) -> Failure {
    Failure { code: 2, err: err.into() }
}

pub fn input_msg(msg: String) -> Failure {
    Failure { code: 2, err: anyhow::anyhow!(msg) }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        input(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::NonFiniteScore { .. } => 3,
            _ => 2,
        };
        Failure { code, err: e.into() }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. } => 3,
            TrainError::Eval(EvalError::NonFiniteScore { .. }) => 3,
            TrainError::BadConfig(_) | TrainError::Data(_) | TrainError::Eval(_) => 2,
        };
        Failure { code, err: e.into() }
    }
}

#[derive(Parser)]
#[command(
    name = "uibrec",
    version,
    about = "Collaborative filtering with per-user interest boundaries",
    long_about = "Train, evaluate, and analyze implicit-feedback recommenders: \
                  BPR, NCF, SML, and LightGCN scorers, each with an optional \
                  UIB boundary objective. Runs are driven by a TOML config \
                  file; flags override file values; identical config + seed \
                  reproduces identical outputs."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct PrepareCmd {
    /// Run config (TOML); optional if --synth or --input says where data is.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in generator: ml1m-desk | lastfm-desk.
    #[arg(long)]
    synth: Option<String>,
    /// Raw interaction log to ingest.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Raw layout: movielens-ratings | lastfm-tsv | amazon-csv.
    #[arg(long)]
    format: Option<String>,
    /// Force the iterative 5-core filter on or off.
    #[arg(long)]
    five_core: Option<bool>,
    /// Dataset label used in artifact names.
    #[arg(long)]
    name: Option<String>,
    /// Seed for the leave-one-out split and candidate sampling.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Sampled negatives per held-out positive.
    #[arg(long)]
    n_neg: Option<usize>,
    /// Where to write the prepared dataset (default <out-root>/prepared/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output root for defaults (see also $UIBREC_OUT).
    #[arg(long)]
    out_root: Option<PathBuf>,
    /// Rebuild even if the output directory is already populated.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainCmd {
    /// Run config (TOML).
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Overwrite finished run directories.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalCmdArgs {
    /// Prepared dataset directory (or use --config to locate it).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run config (TOML) naming the prepared dataset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint file(s) to evaluate (repeatable).
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Directory of run directories; every checkpoint.json inside is evaluated.
    #[arg(long)]
    runs_dir: Option<PathBuf>,
    /// Holdout role: test | valid.
    #[arg(long, default_value = "test")]
    role: String,
    /// Cutoffs, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
    ks: Vec<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-threaded execution.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Precision/recall/F1 of `s > b_u + offset` against held-out positives.
    BoundarySweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Prepared dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Offsets to sweep, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        offsets: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Histogram of the per-user boundary values b_u.
    BoundaryDist {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-epoch loss, corrupted-sample rate, and validation metrics of a run.
    Efficiency {
        /// Run directory holding history.jsonl.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain at several alpha values and report boundary/score statistics.
    AlphaSweep {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Alphas to train at, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct GridCmd {
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Grid axis `key=v1,v2,...` (repeatable); keys: eta, tau, upsilon,
    /// alpha, lambda, gamma, batch_size, m_neg, max_epochs, patience.
    #[arg(long = "param", required = true)]
    params: Vec<String>,
    /// Output directory (default <out-root>/<name>-<hash>-grid).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Overwrite an existing grid output.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ingest or generate a dataset, split it, and freeze eval candidates.
    Prepare(PrepareCmd),
    /// Train one or more seeds and write run artifacts.
    Train(TrainCmd),
    /// Score checkpoints on frozen candidates; aggregate when given several.
    Eval(EvalCmdArgs),
    /// Post-hoc analyses over checkpoints and run histories.
    Analyze {
        #[command(subcommand)]
        mode: AnalyzeCmd,
    },
    /// Exhaustive hyperparameter grid search on validation NDCG@10.
    Grid(GridCmd),
}

fn load_file_or_default(path: Option<&PathBuf>) -> CliResult<config::RunFile> {
    match path {
        Some(p) => config::load_run_file(p),
        None => Ok(config::RunFile::default()),
    }
}

fn parse_role(role: &str) -> CliResult<HoldoutRole> {
    match role {
        "test" => Ok(HoldoutRole::Test),
        "valid" => Ok(HoldoutRole::Valid),
        other => Err(input_msg(format!("unknown role {other:?} (test|valid)"))),
    }
}

fn parse_grid_param(raw: &str) -> CliResult<(String, Vec<f64>)> {
    let (key, values) = raw
        .split_once('=')
        .ok_or_else(|| input_msg(format!("--param {raw:?} is not key=v1,v2,...")))?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| input_msg(format!("--param {key}: {v:?} is not a number")))
        })
        .collect::<CliResult<_>>()?;
    if values.is_empty() {
        return Err(input_msg(format!("--param {key} needs at least one value")));
    }
    Ok((key.to_string(), values))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Prepare(args) => {
            let mut file = load_file_or_default(args.config.as_ref())?;
            if let Some(synth) = args.synth {
                file.dataset.synth = Some(synth);
                file.dataset.path = None;
            }
            if let Some(input) = args.input {
                file.dataset.path = Some(input);
                file.dataset.synth = None;
            }
            if args.format.is_some() {
                file.dataset.format = args.format;
            }
            if args.five_core.is_some() {
                file.dataset.five_core = args.five_core;
            }
            if args.name.is_some() {
                file.dataset.name = args.name;
            }
            if args.split_seed.is_some() {
                file.split.seed = args.split_seed;
            }
            if args.n_neg.is_some() {
                file.eval.n_neg = args.n_neg;
            }
            if args.out.is_some() {
                file.dataset.prepared = args.out;
            }
            let data = config::resolve_data(&file, args.out_root.as_deref(), None)?;
            commands::prepare(&data, args.force)
        }
        Cmd::Train(args) => {
            let file = load_file_or_default(args.config.as_ref())?;
            let resolved = config::resolve(&file, &args.overrides)?;
            commands::train_cmd(&resolved, args.force)
        }
        Cmd::Eval(args) => {
            let prepared = match (&args.data, &args.config) {
                (Some(data), _) => data.clone(),
                (None, Some(path)) => {
                    let file = config::load_run_file(path)?;
                    config::resolve_data(&file, None, None)?.prepared
                }
                (None, None) => {
                    return Err(input_msg(
                        "eval needs --data or --config to find the prepared dataset".to_string(),
                    ))
                }
            };
            let mut checkpoints = args.checkpoint.clone();
            if let Some(dir) = &args.runs_dir {
                checkpoints.extend(commands::scan_runs_dir(dir)?);
            }
            let mode =
                if args.sequential { ExecMode::Sequential } else { ExecMode::default() };
            commands::eval_cmd(&EvalArgs {
                prepared,
                checkpoints,
                role: parse_role(&args.role)?,
                ks: args.ks.clone(),
                out: args.out.clone(),
                mode,
            })
        }
        Cmd::Analyze { mode } => match mode {
            AnalyzeCmd::BoundarySweep { checkpoint, data, offsets, out, sequential } => {
                let offsets = offsets
                    .unwrap_or_else(uibrec_core::evaluation::default_offsets);
                let mode =
                    if sequential { ExecMode::Sequential } else { ExecMode::default() };
                commands::analyze_boundary_sweep(
                    &checkpoint,
                    &data,
                    &offsets,
                    out.as_deref(),
                    mode,
                )
            }
            AnalyzeCmd::BoundaryDist { checkpoint, data, bins, out } => {
                commands::analyze_boundary_dist(&checkpoint, &data, bins, out.as_deref())
            }
            AnalyzeCmd::Efficiency { run, out } => {
                commands::analyze_efficiency(&run, out.as_deref())
            }
            AnalyzeCmd::AlphaSweep { config: path, alphas, out, overrides } => {
                let file = load_file_or_default(path.as_ref())?;
                let resolved = config::resolve(&file, &overrides)?;
                commands::analyze_alpha_sweep(&resolved, &alphas, out.as_deref())
            }
        },
        Cmd::Grid(args) => {
            let file = load_file_or_default(args.config.as_ref())?;
            let resolved = config::resolve(&file, &args.overrides)?;
            let grids = args
                .params
                .iter()
                .map(|p| parse_grid_param(p))
                .collect::<CliResult<Vec<_>>>()?;
            commands::grid_cmd(&resolved, &grids, args.out.as_deref(), args.force)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = run(cli) {
        eprintln!("error: {:#}", failure.err);
        std::process::exit(failure.code);
    }
}
