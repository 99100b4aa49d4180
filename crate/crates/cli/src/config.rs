//! Run configuration: a strict TOML file plus command-line overrides.
//!
//! The file is the auditable record of a run; flags win over file values.
//! Unknown keys anywhere are rejected so a typo (`"epocs"`) cannot silently
//! fall back to a default.

use crate::{input, input_msg, CliResult};
use clap::Args;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use uibrec_core::dataset::Format;
use uibrec_core::losses::LossSpec;
use uibrec_core::presets::preset_by_name;
use uibrec_core::scorers::{ModelKind, ModelSpec};
use uibrec_core::synth::{lastfm_desk, ml1m_desk, SynthSpec};
use uibrec_core::training::TrainConfig;
use uibrec_core::ExecMode;

/// Environment variable naming the default output root (lowest precedence
/// after `--out-root` and the file's `[output] dir`).
pub const OUT_ROOT_ENV: &str = "UIBREC_OUT";

const DEFAULT_KS: [usize; 4] = [1, 5, 10, 20];
const DEFAULT_N_NEG: usize = 100;
const DEFAULT_SPLIT_SEED: u64 = 7;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunFile {
    /// Named starting point, `method@dataset` (e.g. `bpr+uib@ml1m`); the
    /// sections below override individual fields of it.
    pub preset: Option<String>,
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Label used in artifact names. Defaults to the synth kind or the raw
    /// file stem.
    pub name: Option<String>,
    /// Raw interaction log (for `prepare`).
    pub path: Option<PathBuf>,
    /// Raw file layout: movielens-ratings | lastfm-tsv | amazon-csv.
    pub format: Option<String>,
    /// Built-in generator instead of a raw file: ml1m-desk | lastfm-desk.
    pub synth: Option<String>,
    /// Override the format's default iterative 5-core filtering.
    pub five_core: Option<bool>,
    /// Where `prepare` writes and the other commands read.
    pub prepared: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// mf | mlp | metric | gcn
    pub kind: Option<String>,
    pub d: Option<usize>,
    pub k_layers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    /// pointwise-ce | pairwise-lnsig | uib-lnsig | sml | sml-uib
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub m_neg: Option<usize>,
    pub max_epochs: Option<usize>,
    pub eta: Option<f64>,
    pub tau: Option<f64>,
    pub upsilon: Option<f64>,
    pub seed: Option<u64>,
    pub patience: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ks: Option<Vec<usize>>,
    pub n_neg: Option<usize>,
    /// Seeds trained per `train` invocation: seed, seed+1, …
    pub repeats: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Flags shared by the training-flavored commands; every one overrides the
/// corresponding file value.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Named configuration `method@dataset` (e.g. bpr+uib@ml1m); methods:
    /// bpr, bpr+uib, ncf, ncf+uib, sml, sml+uib, lightgcn, lightgcn+uib;
    /// datasets: ml10m, ml1m, aiv, lastfm.
    #[arg(long)]
    pub preset: Option<String>,
    /// Base RNG seed for model init and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adagrad learning rate η.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Embedding L2 coefficient τ.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Extra embedding weight decay υ (LightGCN rows).
    #[arg(long)]
    pub upsilon: Option<f64>,
    /// Negative-side loss weight α (boundary losses only).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Spread-hinge weight λ (SML losses only).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Margin-regularizer weight γ (SML losses only).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Positives per minibatch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Negatives sampled per positive (M).
    #[arg(long)]
    pub m_neg: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Stale validation evaluations tolerated before early stop.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Seeds trained in one go: seed, seed+1, …
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output root (default: file [output] dir, then $UIBREC_OUT, then ./runs).
    #[arg(long)]
    pub out_root: Option<PathBuf>,
    /// Single-threaded execution (results are identical either way).
    #[arg(long)]
    pub sequential: bool,
}

/// Which built-in generator a config names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Ml1mDesk,
    LastfmDesk,
}

impl SynthKind {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "ml1m-desk" => Ok(SynthKind::Ml1mDesk),
            "lastfm-desk" => Ok(SynthKind::LastfmDesk),
            other => Err(input_msg(format!(
                "unknown synth dataset {other:?} (ml1m-desk|lastfm-desk)"
            ))),
        }
    }

    pub fn spec(self) -> SynthSpec {
        match self {
            SynthKind::Ml1mDesk => ml1m_desk(),
            SynthKind::LastfmDesk => lastfm_desk(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Ml1mDesk => "ml1m-desk",
            SynthKind::LastfmDesk => "lastfm-desk",
        }
    }
}

/// The dataset/split/output half of a run file, resolvable without a model
/// section (all `prepare` needs).
#[derive(Debug, Clone)]
pub struct DataResolved {
    pub name: String,
    pub raw: Option<PathBuf>,
    pub format: Option<Format>,
    pub synth: Option<SynthKind>,
    pub five_core: Option<bool>,
    pub prepared: PathBuf,
    pub split_seed: u64,
    pub n_neg: usize,
    pub out_root: PathBuf,
}

/// A run file with every default and override applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub data: DataResolved,
    pub config: TrainConfig,
    pub ks: Vec<usize>,
    pub repeats: usize,
}

pub fn load_run_file(path: &Path) -> CliResult<RunFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_msg(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| input_msg(format!("config {}: {e}", path.display())))
}

fn build_loss(section: &LossSection) -> CliResult<LossSpec> {
    let family = section.family.as_deref().ok_or_else(|| {
        input_msg("config needs either a preset or a [loss] family".to_string())
    })?;
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| input_msg(format!("loss family {family:?} requires {name}")))
    };
    let forbid = |v: Option<f64>, name: &str| match v {
        Some(_) => Err(input_msg(format!("loss family {family:?} does not take {name}"))),
        None => Ok(()),
    };
    match family {
        "pointwise-ce" | "pairwise-lnsig" => {
            forbid(section.alpha, "alpha")?;
            forbid(section.lambda, "lambda")?;
            forbid(section.gamma, "gamma")?;
            Ok(if family == "pointwise-ce" {
                LossSpec::PointwiseCe
            } else {
                LossSpec::PairwiseLnsig
            })
        }
        "uib-lnsig" => {
            forbid(section.lambda, "lambda")?;
            forbid(section.gamma, "gamma")?;
            Ok(LossSpec::UibLnsig { alpha: need(section.alpha, "alpha")? })
        }
        "sml" => {
            forbid(section.alpha, "alpha")?;
            Ok(LossSpec::Sml {
                lambda: need(section.lambda, "lambda")?,
                gamma: need(section.gamma, "gamma")?,
            })
        }
        "sml-uib" => Ok(LossSpec::SmlUib {
            alpha: need(section.alpha, "alpha")?,
            lambda: need(section.lambda, "lambda")?,
            gamma: need(section.gamma, "gamma")?,
        }),
        other => Err(input_msg(format!(
            "unknown loss family {other:?} \
             (pointwise-ce|pairwise-lnsig|uib-lnsig|sml|sml-uib)"
        ))),
    }
}

fn patch_loss(loss: &mut LossSpec, key: &str, value: f64) -> CliResult<()> {
    let family = loss.name();
    match (loss, key) {
        (LossSpec::UibLnsig { alpha } | LossSpec::SmlUib { alpha, .. }, "alpha") => {
            *alpha = value
        }
        (LossSpec::Sml { lambda, .. } | LossSpec::SmlUib { lambda, .. }, "lambda") => {
            *lambda = value
        }
        (LossSpec::Sml { gamma, .. } | LossSpec::SmlUib { gamma, .. }, "gamma") => {
            *gamma = value
        }
        _ => {
            return Err(input_msg(format!("{key} does not apply to loss family {family}")))
        }
    }
    Ok(())
}

/// Resolve the dataset/split/output sections alone. `fallback_name` is the
/// dataset half of a preset, used when the file names no dataset at all.
pub fn resolve_data(
    file: &RunFile,
    out_root_flag: Option<&Path>,
    fallback_name: Option<&str>,
) -> CliResult<DataResolved> {
    let synth = match file.dataset.synth.as_deref() {
        Some(s) => Some(SynthKind::parse(s)?),
        None => None,
    };
    let name = file
        .dataset
        .name
        .clone()
        .or_else(|| synth.map(|s| s.name().to_string()))
        .or_else(|| {
            file.dataset
                .path
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
        })
        .or_else(|| fallback_name.map(str::to_string))
        .ok_or_else(|| {
            input_msg("[dataset] needs a name, a synth kind, or a raw path".to_string())
        })?;
    let format = match file.dataset.format.as_deref() {
        Some(f) => Some(f.parse::<Format>().map_err(input)?),
        None => None,
    };
    let out_root = out_root_flag
        .map(Path::to_path_buf)
        .or_else(|| file.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let prepared = file
        .dataset
        .prepared
        .clone()
        .unwrap_or_else(|| out_root.join("prepared").join(&name));
    let n_neg = file.eval.n_neg.unwrap_or(DEFAULT_N_NEG);
    if n_neg == 0 {
        return Err(input_msg("eval n_neg must be at least 1".to_string()));
    }
    Ok(DataResolved {
        name,
        raw: file.dataset.path.clone(),
        format,
        synth,
        five_core: file.dataset.five_core,
        prepared,
        split_seed: file.split.seed.unwrap_or(DEFAULT_SPLIT_SEED),
        n_neg,
        out_root,
    })
}

/// Merge precedence: built-in defaults < preset < file sections < flags.
pub fn resolve(file: &RunFile, over: &Overrides) -> CliResult<Resolved> {
    // ----- model + loss base -----
    let preset_name = over.preset.as_deref().or(file.preset.as_deref());
    let mut config = match preset_name {
        Some(name) => preset_by_name(name).map_err(input_msg)?,
        None => {
            let kind: ModelKind = file
                .model
                .kind
                .as_deref()
                .ok_or_else(|| {
                    input_msg("config needs either a preset or a [model] kind".to_string())
                })?
                .parse()
                .map_err(input_msg)?;
            let d = file.model.d.unwrap_or(32);
            let k_default = if kind == ModelKind::Gcn { 3 } else { 0 };
            let spec =
                ModelSpec { kind, d, k_layers: file.model.k_layers.unwrap_or(k_default) };
            TrainConfig::new(spec, build_loss(&file.loss)?)
        }
    };

    // ----- file-section patches on top of a preset -----
    if preset_name.is_some() {
        if let Some(kind) = file.model.kind.as_deref() {
            config.model.kind = kind.parse().map_err(input_msg)?;
        }
        if let Some(d) = file.model.d {
            config.model.d = d;
        }
        if let Some(k) = file.model.k_layers {
            config.model.k_layers = k;
        }
        if file.loss.family.is_some() {
            config.loss = build_loss(&file.loss)?;
        } else {
            for (key, v) in [
                ("alpha", file.loss.alpha),
                ("lambda", file.loss.lambda),
                ("gamma", file.loss.gamma),
            ] {
                if let Some(v) = v {
                    patch_loss(&mut config.loss, key, v)?;
                }
            }
        }
    }
    let t = &file.train;
    for (slot, v) in [
        (&mut config.batch_size, t.batch_size),
        (&mut config.m_neg, t.m_neg),
        (&mut config.max_epochs, t.max_epochs),
        (&mut config.patience, t.patience),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    for (slot, v) in
        [(&mut config.eta, t.eta), (&mut config.tau, t.tau), (&mut config.upsilon, t.upsilon)]
    {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(s) = t.seed {
        config.seed = s;
    }

    // ----- flag patches -----
    for (key, v) in [("alpha", over.alpha), ("lambda", over.lambda), ("gamma", over.gamma)] {
        if let Some(v) = v {
            patch_loss(&mut config.loss, key, v)?;
        }
    }
    for (slot, v) in [
        (&mut config.batch_size, over.batch_size),
        (&mut config.m_neg, over.m_neg),
        (&mut config.max_epochs, over.max_epochs),
        (&mut config.patience, over.patience),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    for (slot, v) in [
        (&mut config.eta, over.eta),
        (&mut config.tau, over.tau),
        (&mut config.upsilon, over.upsilon),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(s) = over.seed {
        config.seed = s;
    }
    if over.sequential {
        config.exec = ExecMode::Sequential;
    }
    // unless pinned explicitly, M follows the loss family: 32 negatives for
    // boundary losses, 1 otherwise
    if t.m_neg.is_none() && over.m_neg.is_none() {
        config.m_neg = if config.loss.alpha().is_some() { 32 } else { 1 };
    }
    config.validate().map_err(input)?;

    let fallback = preset_name.and_then(|n| n.split_once('@').map(|(_, d)| d));
    let data = resolve_data(file, over.out_root.as_deref(), fallback)?;
    let repeats = over.repeats.or(file.eval.repeats).unwrap_or(1);
    if repeats == 0 {
        return Err(input_msg("repeats must be at least 1".to_string()));
    }
    let ks = file.eval.ks.clone().unwrap_or_else(|| DEFAULT_KS.to_vec());
    if ks.is_empty() || ks.contains(&0) {
        return Err(input_msg("eval ks must be nonempty positive integers".to_string()));
    }

    Ok(Resolved { data, config, ks, repeats })
}

/// Serialize a resolved run back into the run-file layout (used for
/// `grid`'s best-configuration output). Field order is fixed, so equal
/// configurations produce byte-identical files.
pub fn to_run_toml(resolved: &Resolved, config: &TrainConfig) -> String {
    use std::fmt::Write as _;
    let data = &resolved.data;
    let mut s = String::new();
    let _ = writeln!(s, "[dataset]");
    let _ = writeln!(s, "name = {:?}", data.name);
    if let Some(synth) = data.synth {
        let _ = writeln!(s, "synth = {:?}", synth.name());
    }
    if let Some(raw) = &data.raw {
        let _ = writeln!(s, "path = {:?}", raw.display().to_string());
    }
    if let Some(format) = data.format {
        let _ = writeln!(s, "format = \"{format}\"");
    }
    if let Some(fc) = data.five_core {
        let _ = writeln!(s, "five_core = {fc}");
    }
    let _ = writeln!(s, "prepared = {:?}", data.prepared.display().to_string());
    let _ = writeln!(s, "\n[split]\nseed = {}", data.split_seed);
    let _ = writeln!(s, "\n[model]");
    let _ = writeln!(s, "kind = \"{}\"", config.model.kind);
    let _ = writeln!(s, "d = {}", config.model.d);
    let _ = writeln!(s, "k_layers = {}", config.model.k_layers);
    let _ = writeln!(s, "\n[loss]");
    let _ = writeln!(s, "family = \"{}\"", config.loss.name());
    if let Some(a) = config.loss.alpha() {
        let _ = writeln!(s, "alpha = {a}");
    }
    if let LossSpec::Sml { lambda, gamma } | LossSpec::SmlUib { lambda, gamma, .. } =
        config.loss
    {
        let _ = writeln!(s, "lambda = {lambda}");
        let _ = writeln!(s, "gamma = {gamma}");
    }
    let _ = writeln!(s, "\n[train]");
    let _ = writeln!(s, "batch_size = {}", config.batch_size);
    let _ = writeln!(s, "m_neg = {}", config.m_neg);
    let _ = writeln!(s, "max_epochs = {}", config.max_epochs);
    let _ = writeln!(s, "eta = {}", config.eta);
    let _ = writeln!(s, "tau = {}", config.tau);
    let _ = writeln!(s, "upsilon = {}", config.upsilon);
    let _ = writeln!(s, "seed = {}", config.seed);
    let _ = writeln!(s, "patience = {}", config.patience);
    let _ = writeln!(s, "\n[eval]");
    let _ = writeln!(s, "ks = {:?}", resolved.ks);
    let _ = writeln!(s, "n_neg = {}", data.n_neg);
    let _ = writeln!(s, "repeats = {}", resolved.repeats);
    let _ = writeln!(s, "\n[output]");
    let _ = writeln!(s, "dir = {:?}", data.out_root.display().to_string());
    s
}
