//! Run artifacts: directory layout, manifests, checkpoints, and CSV export.
//!
//! Everything written here is deterministic: JSON with fixed field order, no
//! timestamps, floats printed with Rust's shortest round-trip formatting.
//! Rerunning an identical config + seed reproduces every file byte for byte.

use crate::{input_msg, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use uibrec_core::dataset::{EvalCandidates, InteractionSet, SplitSummary};
use uibrec_core::error::DataError;
use uibrec_core::evaluation::{AggregateRow, AlphaStudyRow, BoundaryDistribution, MetricsRow, OffsetRow};
use uibrec_core::scorers::ModelState;
use uibrec_core::training::{DataBundle, EpochRecord, GridReport, TrainConfig};

pub const PREPARE_MANIFEST: &str = "prepare.json";
pub const RUN_MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const CANDIDATES_FILE: &str = "candidates.txt";

const PREPARE_FORMAT: &str = "uibrec-prepare v1";
const RUN_FORMAT: &str = "uibrec-run v1";
const CHECKPOINT_FORMAT: &str = "uibrec-checkpoint v1";

/// What `prepare` records next to the split files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub format: String,
    pub name: String,
    /// `synth:<kind>` or `<format>:<path>`.
    pub source: String,
    pub five_core: bool,
    /// Interactions dropped by the 5-core filter.
    pub core_filtered: usize,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub split: SplitSummary,
    /// Sampled negatives per held-out positive in `candidates.txt`.
    pub n_neg: usize,
}

/// What `train` records per run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub dataset: String,
    pub prepared: String,
    pub split_seed: u64,
    pub n_neg: usize,
    pub config: TrainConfig,
    pub batches_per_epoch: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub diverged_at: Option<usize>,
    pub val_ndcg10: Option<f64>,
    pub test: Vec<MetricsRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format: String,
    pub config: TrainConfig,
    /// Index into the run's history of the stored state.
    pub best_epoch: usize,
    pub state: ModelState,
}

/// Eight hex chars identifying a training configuration (seed excluded — it
/// appears in the directory name instead, so sibling seeds share the hash).
pub fn config_hash(name: &str, split_seed: u64, n_neg: usize, config: &TrainConfig) -> String {
    #[derive(Serialize)]
    struct HashInput<'a> {
        dataset: &'a str,
        split_seed: u64,
        n_neg: usize,
        config: &'a TrainConfig,
    }
    let mut config = config.clone();
    config.seed = 0;
    let json = serde_json::to_string(&HashInput {
        dataset: name,
        split_seed,
        n_neg,
        config: &config,
    })
    .expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..4].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_dir(out_root: &Path, name: &str, hash: &str, seed: u64) -> PathBuf {
    out_root.join(format!("{name}-{hash}-s{seed}"))
}

pub fn write_text(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| input_msg(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content)
        .map_err(|e| input_msg(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(value).expect("artifact serializes");
    json.push('\n');
    write_text(path, &json)
}

pub fn save_prepare_manifest(dir: &Path, manifest: &PrepareManifest) -> CliResult<()> {
    write_json(&dir.join(PREPARE_MANIFEST), manifest)
}

pub fn load_prepare_manifest(dir: &Path) -> CliResult<PrepareManifest> {
    let path = dir.join(PREPARE_MANIFEST);
    if !path.exists() {
        return Err(input_msg(format!(
            "no prepared dataset at {} (run `uibrec prepare` first)",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&path)
        .map_err(|e| input_msg(format!("cannot read {}: {e}", path.display())))?;
    let manifest: PrepareManifest = serde_json::from_str(&text)
        .map_err(|e| input_msg(format!("{}: {e}", path.display())))?;
    if manifest.format != PREPARE_FORMAT {
        return Err(input_msg(format!(
            "{}: unsupported format {:?} (expected {PREPARE_FORMAT:?})",
            path.display(),
            manifest.format
        )));
    }
    Ok(manifest)
}

pub fn prepare_manifest_new(
    name: &str,
    source: String,
    five_core: bool,
    core_filtered: usize,
    all: &InteractionSet,
    split: SplitSummary,
    n_neg: usize,
) -> PrepareManifest {
    PrepareManifest {
        format: PREPARE_FORMAT.to_string(),
        name: name.to_string(),
        source,
        five_core,
        core_filtered,
        users: all.user_count(),
        items: all.item_count(),
        interactions: all.len(),
        split,
        n_neg,
    }
}

/// Load the three splits plus candidates written by `prepare`.
pub fn load_bundle(prepared: &Path) -> CliResult<(DataBundle, PrepareManifest)> {
    let manifest = load_prepare_manifest(prepared)?;
    let bundle = DataBundle {
        train: InteractionSet::load_from(&prepared.join(TRAIN_FILE))?,
        valid: InteractionSet::load_from(&prepared.join(VALID_FILE))?,
        test: InteractionSet::load_from(&prepared.join(TEST_FILE))?,
        candidates: EvalCandidates::load_from(&prepared.join(CANDIDATES_FILE))?,
    };
    Ok((bundle, manifest))
}

pub fn save_checkpoint(
    path: &Path,
    config: &TrainConfig,
    best_epoch: usize,
    state: &ModelState,
) -> CliResult<()> {
    // serialize by reference to avoid cloning the embeddings
    #[derive(Serialize)]
    struct Ref<'a> {
        format: &'a str,
        config: &'a TrainConfig,
        best_epoch: usize,
        state: &'a ModelState,
    }
    write_json(path, &Ref { format: CHECKPOINT_FORMAT, config, best_epoch, state })
}

pub fn load_checkpoint(path: &Path) -> CliResult<CheckpointFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_msg(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| {
        DataError::BadCheckpoint { path: path.to_path_buf(), msg: e.to_string() }
    })?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(DataError::BadCheckpoint {
            path: path.to_path_buf(),
            msg: format!("unsupported format {:?} (expected {CHECKPOINT_FORMAT:?})", file.format),
        }
        .into());
    }
    Ok(file)
}

pub fn run_manifest_new(
    dataset: &str,
    prepared: &Path,
    split_seed: u64,
    n_neg: usize,
    config: &TrainConfig,
    outcome_batches: usize,
    epochs_run: usize,
    best_epoch: usize,
    stopped_early: bool,
    diverged_at: Option<usize>,
    val_ndcg10: Option<f64>,
    test: Vec<MetricsRow>,
) -> RunManifest {
    RunManifest {
        format: RUN_FORMAT.to_string(),
        dataset: dataset.to_string(),
        prepared: prepared.display().to_string(),
        split_seed,
        n_neg,
        config: config.clone(),
        batches_per_epoch: outcome_batches,
        epochs_run,
        best_epoch,
        stopped_early,
        diverged_at,
        val_ndcg10,
        test,
    }
}

pub fn save_run_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    write_json(&dir.join(RUN_MANIFEST), manifest)
}

pub fn save_history(dir: &Path, history: &[EpochRecord]) -> CliResult<()> {
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    write_text(&dir.join(HISTORY_FILE), &out)
}

pub fn read_history(path: &Path) -> CliResult<Vec<EpochRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_msg(format!("cannot read history {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| {
                input_msg(format!("{} line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV emitters. Column sets are part of the CLI contract; floats use `{}`
// (shortest representation that round-trips), empty cells encode None.
// ---------------------------------------------------------------------------

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("k,hit,ndcg,mrr\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.k, r.hit, r.ndcg, r.mrr));
    }
    s
}

pub fn summary_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("k,hit_mean,hit_std,ndcg_mean,ndcg_std,mrr_mean,mrr_std,runs\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k, r.hit_mean, r.hit_std, r.ndcg_mean, r.ndcg_std, r.mrr_mean, r.mrr_std, r.runs
        ));
    }
    s
}

pub fn sweep_csv(rows: &[OffsetRow]) -> String {
    let mut s = String::from("offset,precision,recall,f1\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.offset, r.precision, r.recall, r.f1));
    }
    s
}

pub fn dist_csv(dist: &BoundaryDistribution) -> String {
    let mut s = String::from("bin_left,bin_right,count\n");
    for b in &dist.bins {
        s.push_str(&format!("{},{},{}\n", b.left, b.right, b.count));
    }
    s
}

pub fn efficiency_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(
        "epoch,loss_total,loss_pos,loss_neg,corrupted_rate,\
         val_hit1,val_hit10,val_ndcg10,val_mrr10\n",
    );
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.loss_total,
            r.loss_pos,
            r.loss_neg,
            r.corrupted_rate,
            opt(r.val_hit1),
            opt(r.val_hit10),
            opt(r.val_ndcg10),
            opt(r.val_mrr10),
        ));
    }
    s
}

pub fn alpha_csv(rows: &[AlphaStudyRow]) -> String {
    let mut s = String::from(
        "alpha,ndcg10,boundary_mean,pos_median,pos_iqr,neg_median,neg_iqr,\
         best_epoch,epochs_run\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.alpha,
            r.ndcg10,
            r.boundary_mean,
            r.pos_median,
            r.pos_iqr,
            r.neg_median,
            r.neg_iqr,
            r.best_epoch,
            r.epochs_run,
        ));
    }
    s
}

/// One column per grid key (in grid order), then the outcome columns. A
/// diverged point reports an empty ndcg10 cell.
pub fn grid_csv(report: &GridReport) -> String {
    let keys: Vec<&str> = report
        .points
        .first()
        .map(|p| p.assignment.iter().map(|(k, _)| k.as_str()).collect())
        .unwrap_or_default();
    let mut s = keys.join(",");
    s.push_str(",ndcg10,best_epoch,epochs_run,diverged\n");
    for p in &report.points {
        for (_, v) in &p.assignment {
            s.push_str(&format!("{v},"));
        }
        let value = if p.diverged { String::new() } else { p.value.to_string() };
        s.push_str(&format!("{},{},{},{}\n", value, p.best_epoch, p.epochs_run, p.diverged));
    }
    s
}
