//! The five subcommands: prepare, train, eval, analyze, grid.

use crate::artifacts;
use crate::config::{DataResolved, Resolved};
use crate::{input_msg, CliResult};
use std::path::{Path, PathBuf};
use uibrec_core::dataset::{build_candidates, ingest_with, split_leave_one_out, HoldoutRole};
use uibrec_core::evaluation::{
    aggregate, alpha_study, boundary_distribution, boundary_sweep, check_coverage, evaluate,
    MetricsReport,
};
use uibrec_core::scorers::{ModelKind, ModelState};
use uibrec_core::synth::generate;
use uibrec_core::training::{grid_search, train, DataBundle};
use uibrec_core::ExecMode;

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

pub fn prepare(data: &DataResolved, force: bool) -> CliResult<()> {
    let (all, source, five_core, core_filtered) = match (data.synth, &data.raw) {
        (Some(_), Some(_)) => {
            return Err(input_msg(
                "[dataset] sets both a synth kind and a raw path; pick one".to_string(),
            ))
        }
        (None, None) => {
            return Err(input_msg(
                "[dataset] needs either a synth kind or a raw path".to_string(),
            ))
        }
        (Some(kind), None) => {
            if data.five_core.is_some() {
                return Err(input_msg(
                    "five_core applies to raw datasets, not synth generators".to_string(),
                ));
            }
            let all = generate(&kind.spec());
            (all, format!("synth:{}", kind.name()), false, 0)
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(input_msg(format!("raw dataset {} does not exist", path.display())));
            }
            let format = data.format.ok_or_else(|| {
                input_msg("raw datasets need a [dataset] format".to_string())
            })?;
            let five_core = data.five_core.unwrap_or_else(|| format.default_five_core());
            let ingested = ingest_with(path, format, five_core)?;
            let source = format!("{format}:{}", path.display());
            (ingested.interactions, source, five_core, ingested.core_filtered)
        }
    };

    let out = &data.prepared;
    if out.join(artifacts::PREPARE_MANIFEST).exists() && !force {
        return Err(input_msg(format!(
            "prepared output already exists at {} (pass --force to rebuild)",
            out.display()
        )));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| input_msg(format!("cannot create {}: {e}", out.display())))?;

    let split = split_leave_one_out(&all, data.split_seed);
    let candidates =
        build_candidates(&split.train, &split.valid, &split.test, data.n_neg, data.split_seed)?;

    split.train.save_to(&out.join(artifacts::TRAIN_FILE))?;
    split.valid.save_to(&out.join(artifacts::VALID_FILE))?;
    split.test.save_to(&out.join(artifacts::TEST_FILE))?;
    candidates.save_to(&out.join(artifacts::CANDIDATES_FILE))?;
    let manifest = artifacts::prepare_manifest_new(
        &data.name,
        source,
        five_core,
        core_filtered,
        &all,
        split.summary.clone(),
        data.n_neg,
    );
    artifacts::save_prepare_manifest(out, &manifest)?;

    let density = all.len() as f64 / (all.user_count() as f64 * all.item_count() as f64);
    let per_user = all.len() as f64 / manifest.split.users_total.max(1) as f64;
    println!("dataset {} ({})", data.name, manifest.source);
    println!("  users         {:>12}", thousands(all.user_count()));
    println!("  items         {:>12}", thousands(all.item_count()));
    println!("  interactions  {:>12}", thousands(all.len()));
    println!("  density       {:>11.2}%", density * 100.0);
    println!("  avg. per user {:>12.1}", per_user);
    if five_core {
        println!("  5-core filter dropped {} interactions", thousands(core_filtered));
    }
    let s = &manifest.split;
    println!(
        "split seed {} ({} holdouts): train {} / valid {} / test {}; \
         excluded {} users ({} interactions)",
        s.seed,
        if s.by_timestamp { "recency" } else { "seeded" },
        thousands(s.train_interactions),
        thousands(s.valid_interactions),
        thousands(s.test_interactions),
        thousands(s.users_excluded),
        thousands(s.interactions_excluded),
    );
    println!("candidates: {} sampled negatives per held-out positive", data.n_neg);
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn evaluate_state(
    state: &ModelState,
    bundle: &DataBundle,
    role: HoldoutRole,
    ks: &[usize],
    mode: ExecMode,
) -> CliResult<MetricsReport> {
    let frozen = state.frozen();
    Ok(evaluate(&frozen, &bundle.candidates, role, ks, mode)?)
}

pub fn train_cmd(resolved: &Resolved, force: bool) -> CliResult<()> {
    let data = &resolved.data;
    let (bundle, _manifest) = artifacts::load_bundle(&data.prepared)?;
    let hash = config_hash_of(resolved);
    let seeds: Vec<u64> =
        (0..resolved.repeats as u64).map(|i| resolved.config.seed + i).collect();

    // Refuse before doing any work if a target directory is already populated.
    for &seed in &seeds {
        let dir = artifacts::run_dir(&data.out_root, &data.name, &hash, seed);
        if dir.join(artifacts::RUN_MANIFEST).exists() && !force {
            return Err(input_msg(format!(
                "run directory {} already holds a finished run (pass --force to redo)",
                dir.display()
            )));
        }
    }

    let mut test_reports = Vec::new();
    let mut valid_reports = Vec::new();
    for &seed in &seeds {
        let mut config = resolved.config.clone();
        config.seed = seed;
        let outcome = train(&config, &bundle)?;
        let dir = artifacts::run_dir(&data.out_root, &data.name, &hash, seed);
        std::fs::create_dir_all(&dir)
            .map_err(|e| input_msg(format!("cannot create {}: {e}", dir.display())))?;

        let test = evaluate_state(&outcome.state, &bundle, HoldoutRole::Test, &resolved.ks, config.exec)?;
        let valid = if bundle.has_validation() {
            Some(evaluate_state(&outcome.state, &bundle, HoldoutRole::Valid, &resolved.ks, config.exec)?)
        } else {
            None
        };

        artifacts::save_history(&dir, &outcome.history)?;
        artifacts::save_checkpoint(
            &dir.join(artifacts::CHECKPOINT_FILE),
            &config,
            outcome.best_epoch,
            &outcome.state,
        )?;
        let val_ndcg10 = outcome.history[outcome.best_epoch].val_ndcg10;
        let manifest = artifacts::run_manifest_new(
            &data.name,
            &data.prepared,
            data.split_seed,
            data.n_neg,
            &config,
            outcome.batches_per_epoch,
            outcome.history.len(),
            outcome.best_epoch,
            outcome.stopped_early,
            outcome.diverged_at,
            val_ndcg10,
            test.rows.clone(),
        );
        artifacts::save_run_manifest(&dir, &manifest)?;
        artifacts::write_text(&dir.join("metrics-test.csv"), &artifacts::metrics_csv(&test.rows))?;
        if let Some(valid) = &valid {
            artifacts::write_text(
                &dir.join("metrics-valid.csv"),
                &artifacts::metrics_csv(&valid.rows),
            )?;
        }

        let val_note = match val_ndcg10 {
            Some(v) => format!("val ndcg@10 {v:.4}"),
            None => "no validation".to_string(),
        };
        let test_note = test
            .row(10)
            .map(|r| format!("test hit@10 {:.4} ndcg@10 {:.4}", r.hit, r.ndcg))
            .unwrap_or_default();
        println!(
            "seed {seed}: best epoch {}/{} ({val_note}) {test_note} -> {}",
            outcome.best_epoch + 1,
            outcome.history.len(),
            dir.display(),
        );
        if let Some(at) = outcome.diverged_at {
            eprintln!(
                "warning: seed {seed} went non-finite at epoch {}; kept the best earlier checkpoint",
                at + 1
            );
        }
        test_reports.push(test);
        if let Some(v) = valid {
            valid_reports.push(v);
        }
    }

    if resolved.repeats > 1 {
        let group = format!("{}-{}", data.name, hash);
        let rows = aggregate(&test_reports)?;
        let path = data.out_root.join(format!("{group}-summary-test.csv"));
        artifacts::write_text(&path, &artifacts::summary_csv(&rows))?;
        println!("summary over {} seeds -> {}", resolved.repeats, path.display());
        for r in &rows {
            println!(
                "  k={:<3} hit {:.4} ± {:.4}  ndcg {:.4} ± {:.4}  mrr {:.4} ± {:.4}",
                r.k, r.hit_mean, r.hit_std, r.ndcg_mean, r.ndcg_std, r.mrr_mean, r.mrr_std
            );
        }
        if valid_reports.len() == test_reports.len() {
            let rows = aggregate(&valid_reports)?;
            let path = data.out_root.join(format!("{group}-summary-valid.csv"));
            artifacts::write_text(&path, &artifacts::summary_csv(&rows))?;
        }
    }
    Ok(())
}

pub fn config_hash_of(resolved: &Resolved) -> String {
    artifacts::config_hash(
        &resolved.data.name,
        resolved.data.split_seed,
        resolved.data.n_neg,
        &resolved.config,
    )
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub struct EvalArgs {
    pub prepared: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub role: HoldoutRole,
    pub ks: Vec<usize>,
    pub out: Option<PathBuf>,
    pub mode: ExecMode,
}

/// Load a checkpoint, rebuild anything the serialized form drops (the graph
/// cache), and sanity-check its shape against the bundle.
fn restore_state(path: &Path, bundle: &DataBundle) -> CliResult<ModelState> {
    let file = artifacts::load_checkpoint(path)?;
    let mut state = file.state;
    if state.user_count() != bundle.train.user_count()
        || state.item_count() != bundle.train.item_count()
    {
        return Err(input_msg(format!(
            "checkpoint {} was trained on {} users x {} items, \
             but the prepared dataset has {} x {}",
            path.display(),
            state.user_count(),
            state.item_count(),
            bundle.train.user_count(),
            bundle.train.item_count(),
        )));
    }
    if state.kind == ModelKind::Gcn {
        state.ensure_graph(&bundle.train)?;
    }
    Ok(state)
}

pub fn eval_cmd(args: &EvalArgs) -> CliResult<()> {
    if args.checkpoints.is_empty() {
        return Err(input_msg(
            "nothing to evaluate: pass --checkpoint (repeatable) or --runs-dir".to_string(),
        ));
    }
    let (bundle, _) = artifacts::load_bundle(&args.prepared)?;
    let role_set = match args.role {
        HoldoutRole::Valid => &bundle.valid,
        HoldoutRole::Test => &bundle.test,
    };
    check_coverage(&bundle.candidates, args.role, role_set)?;

    let mut reports = Vec::new();
    for path in &args.checkpoints {
        let state = restore_state(path, &bundle)?;
        let report = evaluate(&state.frozen(), &bundle.candidates, args.role, &args.ks, args.mode)?;
        reports.push(report);
    }

    let csv = if reports.len() == 1 {
        artifacts::metrics_csv(&reports[0].rows)
    } else {
        artifacts::summary_csv(&aggregate(&reports)?)
    };
    let role_name = match args.role {
        HoldoutRole::Test => "test",
        HoldoutRole::Valid => "valid",
    };
    match &args.out {
        Some(path) => {
            artifacts::write_text(path, &csv)?;
            println!(
                "evaluated {} checkpoint(s) on {role_name} -> {}",
                reports.len(),
                path.display()
            );
            print!("{csv}");
        }
        None => print!("{csv}"),
    }
    Ok(())
}

/// Sorted checkpoint list beneath a directory of run dirs.
pub fn scan_runs_dir(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| input_msg(format!("cannot read runs dir {}: {e}", dir.display())))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| input_msg(format!("{}: {e}", dir.display())))?;
        let ckpt = entry.path().join(artifacts::CHECKPOINT_FILE);
        if ckpt.exists() {
            found.push(ckpt);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(input_msg(format!(
            "no run directories with a {} under {}",
            artifacts::CHECKPOINT_FILE,
            dir.display()
        )));
    }
    Ok(found)
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn emit(out: Option<&Path>, what: &str, csv: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            artifacts::write_text(path, csv)?;
            println!("{what} -> {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn analyze_boundary_sweep(
    checkpoint: &Path,
    prepared: &Path,
    offsets: &[f64],
    out: Option<&Path>,
    mode: ExecMode,
) -> CliResult<()> {
    let (bundle, _) = artifacts::load_bundle(prepared)?;
    let state = restore_state(checkpoint, &bundle)?;
    let observed = [&bundle.train, &bundle.valid, &bundle.test];
    let report = boundary_sweep(&state.frozen(), &observed, offsets, mode)?;
    emit(out, "boundary sweep", &artifacts::sweep_csv(&report.rows))?;
    if let Some(best) = report.best_offset() {
        eprintln!(
            "# {} users x {} items; F1 peaks at offset {} \
             (precision {:.4}, recall {:.4}, f1 {:.4}); \
             filter rate at zero offset {:.4}",
            report.users,
            report.catalog,
            best.offset,
            best.precision,
            best.recall,
            best.f1,
            report.filter_rate_at_zero,
        );
    }
    Ok(())
}

pub fn analyze_boundary_dist(
    checkpoint: &Path,
    prepared: &Path,
    bins: usize,
    out: Option<&Path>,
) -> CliResult<()> {
    if bins == 0 {
        return Err(input_msg("--bins must be at least 1".to_string()));
    }
    let (bundle, _) = artifacts::load_bundle(prepared)?;
    let state = restore_state(checkpoint, &bundle)?;
    let active: Vec<u32> = bundle.train.active_users().collect();
    let dist = boundary_distribution(&state, bins, Some(&active))?;
    emit(out, "boundary distribution", &artifacts::dist_csv(&dist))?;
    eprintln!(
        "# {} users; mean b_u {:.4}, std {:.4}",
        dist.users.len(),
        dist.mean,
        dist.std
    );
    Ok(())
}

pub fn analyze_efficiency(run: &Path, out: Option<&Path>) -> CliResult<()> {
    let history = artifacts::read_history(&run.join(artifacts::HISTORY_FILE))?;
    emit(out, "efficiency trace", &artifacts::efficiency_csv(&history))?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        eprintln!(
            "# {} epochs; corrupted rate {:.4} -> {:.4}",
            history.len(),
            first.corrupted_rate,
            last.corrupted_rate
        );
    }
    Ok(())
}

pub fn analyze_alpha_sweep(
    resolved: &Resolved,
    alphas: &[f64],
    out: Option<&Path>,
) -> CliResult<()> {
    let (bundle, _) = artifacts::load_bundle(&resolved.data.prepared)?;
    let rows = alpha_study(&resolved.config, alphas, &bundle)?;
    emit(out, "alpha sweep", &artifacts::alpha_csv(&rows))?;
    for r in &rows {
        eprintln!(
            "# alpha {:>6}: mean b_u {:.4}, positive-side IQR {:.4}, test ndcg@10 {:.4}",
            r.alpha, r.boundary_mean, r.pos_iqr, r.ndcg10
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

pub fn grid_cmd(
    resolved: &Resolved,
    grids: &[(String, Vec<f64>)],
    out_dir: Option<&Path>,
    force: bool,
) -> CliResult<()> {
    let data = &resolved.data;
    let (bundle, _) = artifacts::load_bundle(&data.prepared)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| {
        data.out_root.join(format!("{}-{}-grid", data.name, config_hash_of(resolved)))
    });
    if dir.join("grid.csv").exists() && !force {
        return Err(input_msg(format!(
            "grid output already exists at {} (pass --force to redo)",
            dir.display()
        )));
    }
    let report = grid_search(&resolved.config, grids, &bundle)?;
    artifacts::write_text(&dir.join("grid.csv"), &artifacts::grid_csv(&report))?;
    let best_toml = crate::config::to_run_toml(resolved, &report.best_config);
    artifacts::write_text(&dir.join("best.toml"), &best_toml)?;

    let best = &report.points[report.best_index];
    let assignment = best
        .assignment
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!(
        "searched {} configurations -> {}",
        report.points.len(),
        dir.join("grid.csv").display()
    );
    println!("best: {assignment} (val ndcg@10 {:.4}) -> {}", best.value, dir.join("best.toml").display());
    Ok(())
}
