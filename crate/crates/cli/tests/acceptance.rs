//! Acceptance gate: nine end-to-end criteria, one test per criterion.
//!
//! Each test finishes by printing a single `[PASS] C<n> ...` line carrying
//! the measured values (visible with `--nocapture`); a failed criterion
//! fails its test with the measurements in the panic message. Every
//! tolerance and threshold is pinned as a named constant next to the test
//! that uses it.
//!
//! The model-behavior criteria (C4-C8) run on the small built-in synthetic
//! datasets so the whole gate stays desk-scale; the full-scale numbers they
//! correspond to are quoted in the PASS lines for orientation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;
use uibrec_core::dataset::{sample_batch, split_leave_one_out, HoldoutRole, TrainBatch};
use uibrec_core::evaluation::{
    alpha_study, boundary_distribution, boundary_sweep, default_offsets, evaluate, rank_metrics,
    MetricsReport,
};
use uibrec_core::losses::{corrupted_counts, effective_pair_stats, LossSpec};
use uibrec_core::presets::preset_by_name;
use uibrec_core::scorers::{GradBuffer, ModelKind, ModelSpec, ModelState};
use uibrec_core::synth::{generate, lastfm_desk, ml1m_desk, SynthSpec};
use uibrec_core::training::{batch_gradients, train, DataBundle, TrainOutcome};
use uibrec_core::ExecMode;

// ===========================================================================
// C1 — finite-difference gradient suite over the eight canonical rows
// ===========================================================================

/// Central-difference step.
const FD_H: f64 = 1e-5;
/// Maximum allowed |fd - analytic| / max(|fd|, |analytic|, FD_SCALE_FLOOR).
const FD_REL_TOL: f64 = 1e-4;
/// Scale floor so near-zero gradients are compared absolutely.
const FD_SCALE_FLOOR: f64 = 1e-3;
/// Accepted probes required per row.
const FD_PROBES_PER_ROW: usize = 100;
/// |L(x+h) + L(x-h) - 2 L(x)| / h above this marks a hinge kink inside the
/// probe interval (a slope jump of this size); such probes are skipped and
/// redrawn. Smooth rows sit orders of magnitude below it.
const FD_KINK_LIMIT: f64 = 1e-3;
/// Wall-clock budget for the whole suite.
const FD_TIME_BUDGET_SECS: u64 = 60;

/// The eight canonical scorer/loss rows.
fn canonical_rows() -> Vec<(ModelKind, LossSpec)> {
    vec![
        (ModelKind::Mf, LossSpec::PairwiseLnsig),
        (ModelKind::Mf, LossSpec::UibLnsig { alpha: 8.0 }),
        (ModelKind::Mlp, LossSpec::PointwiseCe),
        (ModelKind::Mlp, LossSpec::UibLnsig { alpha: 2.0 }),
        (ModelKind::Metric, LossSpec::Sml { lambda: 0.3, gamma: 16.0 }),
        (ModelKind::Metric, LossSpec::SmlUib { alpha: 0.5, lambda: 0.3, gamma: 16.0 }),
        (ModelKind::Gcn, LossSpec::PairwiseLnsig),
        (ModelKind::Gcn, LossSpec::UibLnsig { alpha: 8.0 }),
    ]
}

/// One probable coordinate of the parameter vector.
#[derive(Debug, Clone, Copy)]
enum Site {
    P(u32, usize),
    Q(u32, usize),
    W(usize),
    MlpW(usize, usize, usize),
    MlpB(usize, usize),
    M(u32),
    N(u32),
}

fn coord_mut<'a>(state: &'a mut ModelState, site: &Site) -> &'a mut f64 {
    match *site {
        Site::P(u, j) => &mut state.p.row_mut(u as usize)[j],
        Site::Q(x, j) => &mut state.q.row_mut(x as usize)[j],
        Site::W(j) => &mut state.w[j],
        Site::MlpW(l, r, c) => {
            &mut state.mlp.as_mut().expect("mlp row").layers[l].w.row_mut(r)[c]
        }
        Site::MlpB(l, i) => &mut state.mlp.as_mut().expect("mlp row").layers[l].b[i],
        Site::M(u) => &mut state.margins.as_mut().expect("metric row").m[u as usize],
        Site::N(u) => &mut state.margins.as_mut().expect("metric row").n[u as usize],
    }
}

fn analytic_grad(buf: &GradBuffer, site: &Site) -> f64 {
    match *site {
        Site::P(u, j) => buf.dp.get(&u).map_or(0.0, |r| r[j]),
        Site::Q(x, j) => buf.dq.get(&x).map_or(0.0, |r| r[j]),
        Site::W(j) => buf.dw.as_ref().map_or(0.0, |w| w[j]),
        Site::MlpW(l, r, c) => buf.dmlp.as_ref().map_or(0.0, |m| m.layers[l].w.row(r)[c]),
        Site::MlpB(l, i) => buf.dmlp.as_ref().map_or(0.0, |m| m.layers[l].b[i]),
        Site::M(u) => buf.dm.get(&u).copied().unwrap_or(0.0),
        Site::N(u) => buf.dn.get(&u).copied().unwrap_or(0.0),
    }
}

/// Every coordinate the batch can reach for this model/loss row.
fn probe_sites(state: &ModelState, loss: LossSpec, batch: &TrainBatch) -> Vec<Site> {
    let users: BTreeSet<u32> = batch.users.iter().copied().collect();
    let items: BTreeSet<u32> = batch
        .positives
        .iter()
        .chain(batch.negatives.iter())
        .copied()
        .collect();
    let mut sites = Vec::new();
    let d = state.d;
    // under graph propagation every embedding row reaches the loss
    let (user_rows, item_rows): (Vec<u32>, Vec<u32>) = if state.kind == ModelKind::Gcn {
        ((0..state.user_count() as u32).collect(), (0..state.item_count() as u32).collect())
    } else {
        (users.iter().copied().collect(), items.iter().copied().collect())
    };
    for &u in &user_rows {
        for j in 0..d {
            sites.push(Site::P(u, j));
        }
    }
    for &x in &item_rows {
        for j in 0..d {
            sites.push(Site::Q(x, j));
        }
    }
    if loss.uses_boundary() {
        for j in 0..d {
            sites.push(Site::W(j));
        }
    }
    if let Some(mlp) = &state.mlp {
        for (l, dense) in mlp.layers.iter().enumerate() {
            for r in 0..dense.w.rows() {
                for c in 0..dense.w.cols() {
                    sites.push(Site::MlpW(l, r, c));
                }
            }
            for i in 0..dense.b.len() {
                sites.push(Site::MlpB(l, i));
            }
        }
    }
    if state.margins.is_some() {
        for &u in &users {
            sites.push(Site::M(u));
            sites.push(Site::N(u));
        }
    }
    sites
}

#[test]
fn c1_gradients_match_finite_differences_on_all_eight_rows() {
    let started = Instant::now();
    let all = generate(&SynthSpec {
        users: 12,
        items: 10,
        groups: 2,
        min_per_user: 5,
        max_per_user: 7,
        affinity: 3.0,
        zipf: 0.5,
        seed: 99,
    });
    // graph building and batch sampling both want the train split
    let data = split_leave_one_out(&all, DESK_SPLIT_SEED).train;

    let mut worst: (f64, String) = (0.0, String::new());
    let mut skipped_total = 0usize;
    for (row_idx, (kind, loss)) in canonical_rows().into_iter().enumerate() {
        let spec = ModelSpec { kind, d: 6, k_layers: if kind == ModelKind::Gcn { 3 } else { 0 } };
        let mut state =
            spec.init(loss, data.user_count(), data.item_count(), 1000 + row_idx as u64);
        state.ensure_graph(&data).expect("graph builds");
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + row_idx as u64);
        let batch = sample_batch(&data, 16, 4, &mut rng);

        let loss_of = |state: &ModelState| batch_gradients(state, loss, &batch).0.total;
        let base_loss = loss_of(&state);
        let (_, analytic) = batch_gradients(&state, loss, &batch);
        let sites = probe_sites(&state, loss, &batch);
        // probes draw from this pool with replacement; just make sure the
        // row exposes a healthy spread of coordinates
        assert!(
            sites.len() >= 50,
            "{kind:?}+{}: only {} probable coordinates",
            loss.name(),
            sites.len()
        );

        let mut accepted = 0usize;
        let mut attempts = 0usize;
        while accepted < FD_PROBES_PER_ROW {
            attempts += 1;
            assert!(
                attempts <= 4 * FD_PROBES_PER_ROW,
                "{kind:?}+{}: too many probes skipped as kinks ({accepted} accepted after \
                 {attempts} attempts)",
                loss.name()
            );
            let site = sites[rng.random_range(0..sites.len())];
            let x0 = *coord_mut(&mut state, &site);
            *coord_mut(&mut state, &site) = x0 + FD_H;
            let lp = loss_of(&state);
            *coord_mut(&mut state, &site) = x0 - FD_H;
            let lm = loss_of(&state);
            *coord_mut(&mut state, &site) = x0;

            // slope-jump detector: skip probes straddling a hinge kink
            let jump = (lp + lm - 2.0 * base_loss).abs() / FD_H;
            if jump > FD_KINK_LIMIT {
                skipped_total += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * FD_H);
            let an = analytic_grad(&analytic, &site);
            let scale = fd.abs().max(an.abs()).max(FD_SCALE_FLOOR);
            let rel = (fd - an).abs() / scale;
            assert!(
                rel <= FD_REL_TOL,
                "{kind:?}+{} {site:?}: finite difference {fd} vs analytic {an} \
                 (relative error {rel:.3e} > {FD_REL_TOL:.0e})",
                loss.name()
            );
            if rel > worst.0 {
                worst = (rel, format!("{kind:?}+{}", loss.name()));
            }
            accepted += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < FD_TIME_BUDGET_SECS,
        "FD suite took {elapsed:?}, budget {FD_TIME_BUDGET_SECS}s"
    );
    println!(
        "[PASS] C1 fd-gradients: 8 rows x {FD_PROBES_PER_ROW} probes, h={FD_H:.0e}, \
         worst relative error {:.3e} ({}) <= {FD_REL_TOL:.0e}, {skipped_total} kink probes \
         redrawn, {elapsed:?} < {FD_TIME_BUDGET_SECS}s",
        worst.0, worst.1
    );
}

// ===========================================================================
// C2 — rank metrics against a brute-force sorting oracle
// ===========================================================================

const ORACLE_INSTANCES: usize = 10_000;
const ORACLE_CANDIDATES: usize = 101;

/// Independent oracle: sort candidates by score descending with the positive
/// losing every tie, then read metrics off the positive's 1-based position.
fn brute_force_metrics(scores: &[f64], positive: usize, k: usize) -> (f64, f64, f64) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| (a == positive).cmp(&(b == positive)))
    });
    let rank = order.iter().position(|&i| i == positive).expect("positive present") + 1;
    if rank <= k {
        (1.0, 1.0 / ((rank as f64) + 1.0).log2(), 1.0 / rank as f64)
    } else {
        (0.0, 0.0, 0.0)
    }
}

#[test]
fn c2_rank_metrics_equal_brute_force_sort_on_10k_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
    let ks = [1usize, 5, 10, 20, ORACLE_CANDIDATES];
    for _ in 0..ORACLE_INSTANCES {
        // a third of the scores sit on a coarse lattice so ties are common
        let scores: Vec<f64> = (0..ORACLE_CANDIDATES)
            .map(|_| {
                if rng.random::<f64>() < 0.35 {
                    f64::from(rng.random_range(-4i32..=4)) * 0.5
                } else {
                    rng.random::<f64>() * 4.0 - 2.0
                }
            })
            .collect();
        let positive = rng.random_range(0..ORACLE_CANDIDATES);
        for k in ks {
            let got = rank_metrics(&scores, positive, k).expect("finite scores");
            let (hit, ndcg, mrr) = brute_force_metrics(&scores, positive, k);
            assert!(
                got.hit == hit && got.ndcg == ndcg && got.mrr == mrr,
                "mismatch at k={k}: got ({}, {}, {}), oracle ({hit}, {ndcg}, {mrr})",
                got.hit,
                got.ndcg,
                got.mrr
            );
        }
    }
    println!(
        "[PASS] C2 rank-metrics-oracle: {ORACLE_INSTANCES} instances x {} candidates, \
         ks {ks:?}, exact equality with the sorting oracle (pessimistic ties)",
        ORACLE_CANDIDATES
    );
}

// ===========================================================================
// C3 — corrupted-sample counting: worked example + exhaustive enumeration
// ===========================================================================

const ENUM_INSTANCES: usize = 1_000;
const ENUM_MAX_SIDE: usize = 32;

#[test]
fn c3_effective_pair_stats_match_hand_example_and_enumeration() {
    // worked example: positives {3.0, 1.5, 2.5}, negatives {0.5, 2.0, 1.0},
    // boundary 1.8. Exactly one of nine pairs is misordered (1.5 vs 2.0);
    // exactly one positive (1.5) and one negative (2.0) sit on the wrong
    // side of the boundary.
    let pos = [3.0, 1.5, 2.5];
    let neg = [0.5, 2.0, 1.0];
    let stats = effective_pair_stats(&pos, &neg, Some(1.8));
    assert_eq!(stats.pairwise_fraction, 1.0 / 9.0, "pairwise fraction");
    assert_eq!(stats.uib_fraction, Some(2.0 / 6.0), "boundary fraction");

    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    for case in 0..ENUM_INSTANCES {
        let n_pos = rng.random_range(1..=ENUM_MAX_SIDE);
        let n_neg = rng.random_range(1..=(2 * ENUM_MAX_SIDE - n_pos).min(ENUM_MAX_SIDE));
        // lattice values make score ties and boundary collisions common
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| f64::from(rng.random_range(-6i32..=6)) * 0.25).collect()
        };
        let pos = draw(n_pos);
        let neg = draw(n_neg);
        let b = if case % 3 == 0 {
            None
        } else {
            Some(f64::from(rng.random_range(-6i32..=6)) * 0.25)
        };

        // exhaustive enumeration of all |P| x |N| pairs and |P| + |N| sides
        let mut pair_bad = 0usize;
        for &sp in &pos {
            for &sn in &neg {
                if sn >= sp {
                    pair_bad += 1;
                }
            }
        }
        let counts = corrupted_counts(&pos, &neg, b);
        assert_eq!(counts.pair_bad, pair_bad, "pair_bad, case {case}");
        assert_eq!(counts.pair_total, n_pos * n_neg, "pair_total, case {case}");
        if let Some(b) = b {
            let side_bad = pos.iter().filter(|&&s| s <= b).count()
                + neg.iter().filter(|&&s| s >= b).count();
            assert_eq!(counts.side_bad, side_bad, "side_bad, case {case}");
            assert_eq!(counts.side_total, n_pos + n_neg, "side_total, case {case}");
        } else {
            assert_eq!(counts.side_total, 0, "no boundary => no side counts, case {case}");
        }

        let stats = effective_pair_stats(&pos, &neg, b);
        assert_eq!(stats.pairwise_fraction, pair_bad as f64 / (n_pos * n_neg) as f64);
        assert_eq!(stats.uib_fraction.is_some(), b.is_some());
    }
    println!(
        "[PASS] C3 effective-pair-stats: worked example (pairwise 1/9, boundary 1/3) exact; \
         {ENUM_INSTANCES} enumerated instances (sides <= {ENUM_MAX_SIDE}) exact"
    );
}

// ===========================================================================
// C4 + C5 — BPR vs BPR+UIB at the ML1M preset values, 5 seeds (shared runs)
// ===========================================================================

const FIXTURE_SEEDS: u64 = 5;
const FIXTURE_MAX_EPOCHS: usize = 150;
/// Split / candidate seed for every desk dataset in this suite.
const DESK_SPLIT_SEED: u64 = 7;
const DESK_N_NEG: usize = 100;

struct Ml1mFixture {
    bundle: DataBundle,
    bpr: Vec<TrainOutcome>,
    uib: Vec<TrainOutcome>,
    bpr_test: Vec<MetricsReport>,
    uib_test: Vec<MetricsReport>,
}

static ML1M: OnceLock<Ml1mFixture> = OnceLock::new();

fn ml1m_fixture() -> &'static Ml1mFixture {
    ML1M.get_or_init(|| {
        let all = generate(&ml1m_desk());
        let (bundle, _) =
            DataBundle::prepare(&all, DESK_SPLIT_SEED, DESK_N_NEG).expect("desk data splits");
        // fixed-budget histories: the efficiency comparison (C5) reads the
        // corrupted rate well past the loss plateau, so early stopping is
        // disabled; quality metrics (C4) still come from each run's
        // best-validation checkpoint, which training retains either way
        let run_all = |preset: &str| -> Vec<TrainOutcome> {
            let mut config = preset_by_name(preset).expect("preset exists");
            config.max_epochs = FIXTURE_MAX_EPOCHS;
            config.patience = FIXTURE_MAX_EPOCHS;
            (0..FIXTURE_SEEDS)
                .map(|seed| {
                    let mut c = config.clone();
                    c.seed = seed;
                    train(&c, &bundle).expect("desk training converges")
                })
                .collect()
        };
        let bpr = run_all("bpr@ml1m");
        let uib = run_all("bpr+uib@ml1m");
        let test_all = |runs: &[TrainOutcome]| -> Vec<MetricsReport> {
            runs.iter()
                .map(|o| {
                    evaluate(
                        &o.state.frozen(),
                        &bundle.candidates,
                        HoldoutRole::Test,
                        &[1, 10],
                        ExecMode::default(),
                    )
                    .expect("evaluation succeeds")
                })
                .collect()
        };
        let bpr_test = test_all(&bpr);
        let uib_test = test_all(&uib);
        Ml1mFixture { bundle, bpr, uib, bpr_test, uib_test }
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn c4_uib_beats_bpr_on_the_ml1m_preset_across_seeds() {
    let fx = ml1m_fixture();
    let metric = |reports: &[MetricsReport], k: usize, pick: fn(&uibrec_core::evaluation::MetricsRow) -> f64| {
        mean(reports.iter().map(|r| pick(r.row(k).expect("k evaluated"))))
    };
    let bpr_hit1 = metric(&fx.bpr_test, 1, |r| r.hit);
    let uib_hit1 = metric(&fx.uib_test, 1, |r| r.hit);
    let bpr_ndcg10 = metric(&fx.bpr_test, 10, |r| r.ndcg);
    let uib_ndcg10 = metric(&fx.uib_test, 10, |r| r.ndcg);
    assert!(
        uib_hit1 > bpr_hit1,
        "mean test HIT@1 over {FIXTURE_SEEDS} seeds: UIB {uib_hit1:.4} must exceed BPR {bpr_hit1:.4}"
    );
    assert!(
        uib_ndcg10 > bpr_ndcg10,
        "mean test NDCG@10 over {FIXTURE_SEEDS} seeds: UIB {uib_ndcg10:.4} must exceed BPR {bpr_ndcg10:.4}"
    );
    println!(
        "[PASS] C4 uib-beats-bpr (desk-scale directional, {FIXTURE_SEEDS} seeds): \
         HIT@1 {uib_hit1:.4} > {bpr_hit1:.4}; NDCG@10 {uib_ndcg10:.4} > {bpr_ndcg10:.4} \
         (full-scale ML1M reference: 0.3486 vs 0.3327 NDCG@10)"
    );
}

#[test]
fn c5_uib_keeps_a_higher_corrupted_rate_late_in_training() {
    let fx = ml1m_fixture();
    // mean corrupted rate over each run's own final quarter of epochs
    let late_rate = |runs: &[TrainOutcome]| -> f64 {
        mean(runs.iter().map(|o| {
            let h = &o.history;
            let from = (3 * h.len()) / 4;
            mean(h[from..].iter().map(|r| r.corrupted_rate))
        }))
    };
    let bpr = late_rate(&fx.bpr);
    let uib = late_rate(&fx.uib);
    assert!(
        uib > bpr,
        "late-training corrupted rate: UIB {uib:.4} must exceed BPR {bpr:.4}"
    );
    println!(
        "[PASS] C5 class-balance: mean corrupted rate over the final quarter of epochs, \
         {FIXTURE_SEEDS} seeds: UIB {uib:.4} > BPR {bpr:.4} \
         (boundary-side counting vs pair counting)"
    );
}

// ===========================================================================
// C6 — trained NCF+UIB boundary distribution: spread out and unimodal
// ===========================================================================

const NCF_MAX_EPOCHS: usize = 60;
const DIST_BINS: usize = 24;

static NCF_UIB: OnceLock<TrainOutcome> = OnceLock::new();

fn ncf_uib_outcome() -> &'static TrainOutcome {
    NCF_UIB.get_or_init(|| {
        let bundle = &ml1m_fixture().bundle;
        let mut config = preset_by_name("ncf+uib@ml1m").expect("preset exists");
        config.max_epochs = NCF_MAX_EPOCHS;
        train(&config, bundle).expect("desk training converges")
    })
}

/// Collapse consecutive equal-direction moves of the smoothed histogram;
/// unimodal means the direction pattern is (rises)(falls) with no second
/// rise: one of `[]`, `[+]`, `[-]`, `[+,-]`.
fn is_unimodal(counts: &[u64]) -> bool {
    let n = counts.len();
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { counts[i - 1] as f64 } else { 0.0 };
            let right = if i + 1 < n { counts[i + 1] as f64 } else { 0.0 };
            (left + 2.0 * counts[i] as f64 + right) / 4.0
        })
        .collect();
    let mut pattern: Vec<i8> = Vec::new();
    for w in smoothed.windows(2) {
        let sign = match w[1].partial_cmp(&w[0]).expect("finite") {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
        };
        if sign != 0 && pattern.last() != Some(&sign) {
            pattern.push(sign);
        }
    }
    matches!(pattern.as_slice(), [] | [1] | [-1] | [1, -1])
}

#[test]
fn c6_trained_ncf_uib_boundaries_are_spread_and_unimodal() {
    let outcome = ncf_uib_outcome();
    let bundle = &ml1m_fixture().bundle;
    let active: Vec<u32> = bundle.train.active_users().collect();
    let dist = boundary_distribution(&outcome.state, DIST_BINS, Some(&active))
        .expect("NCF+UIB trains a boundary");
    assert!(dist.std > 0.0, "std of b_u must be positive, got {}", dist.std);
    let counts: Vec<u64> = dist.bins.iter().map(|b| b.count).collect();
    assert!(
        is_unimodal(&counts),
        "smoothed histogram must be unimodal; bin counts: {counts:?}"
    );
    println!(
        "[PASS] C6 boundary-distribution: trained NCF+UIB, {} users, mean b_u {:.4}, \
         std {:.4} > 0, {DIST_BINS}-bin histogram unimodal after 1-2-1 smoothing",
        dist.users.len(),
        dist.mean,
        dist.std
    );
}

// ===========================================================================
// C7 — boundary sweep: F1 peaks at the learned boundary, monotone flanks
// ===========================================================================

/// The best offset must land within one sweep step of zero.
const SWEEP_STEP: f64 = 1.0;
/// Slack for float comparisons on pooled ratios.
const MONOTONE_EPS: f64 = 1e-12;

#[test]
fn c7_f1_peaks_at_the_learned_boundary_with_monotone_flanks() {
    // the offset sweep examines the same trained NCF+UIB model whose
    // boundary distribution C6 checks
    let outcome = ncf_uib_outcome();
    let bundle = &ml1m_fixture().bundle;
    let observed = [&bundle.train, &bundle.valid, &bundle.test];
    let offsets = default_offsets();
    let report = boundary_sweep(&outcome.state.frozen(), &observed, &offsets, ExecMode::default())
        .expect("UIB model has a boundary");

    let best_row = report.best_offset().expect("rows exist");
    assert!(
        best_row.offset.abs() <= SWEEP_STEP,
        "F1 is maximized at offset {} (F1 {:.4}); must be within one step ({SWEEP_STEP}) of 0. \
         Full sweep: {:?}",
        best_row.offset,
        best_row.f1,
        report.rows.iter().map(|r| (r.offset, r.f1)).collect::<Vec<_>>()
    );
    for w in report.rows.windows(2) {
        assert!(
            w[1].recall <= w[0].recall + MONOTONE_EPS,
            "recall must be nonincreasing in the offset: {} -> {} at offset {}",
            w[0].recall,
            w[1].recall,
            w[1].offset
        );
    }
    for w in report.rows.windows(2) {
        if w[1].passed == 0 {
            break; // nothing predicted positive from here on
        }
        assert!(
            w[1].precision >= w[0].precision - MONOTONE_EPS,
            "precision must be nondecreasing up to the empty-prediction point: \
             {} -> {} at offset {}",
            w[0].precision,
            w[1].precision,
            w[1].offset
        );
    }
    println!(
        "[PASS] C7 boundary-matching: trained NCF+UIB, F1 max at offset {} \
         (within +/-{SWEEP_STEP} of 0, F1 {:.3}), recall nonincreasing, precision \
         nondecreasing while predictions remain (offsets {:.0}..{:.0})",
        best_row.offset,
        best_row.f1,
        offsets.first().unwrap(),
        offsets.last().unwrap()
    );
}

// ===========================================================================
// C8 — alpha study on the LastFM-scale desk set: boundary up, spread down
// ===========================================================================

const ALPHA_LEVELS: [f64; 3] = [0.1, 1.0, 8.0];
const ALPHA_MAX_EPOCHS: usize = 120;

#[test]
fn c8_larger_alpha_raises_the_boundary_and_tightens_positive_spread() {
    let all = generate(&lastfm_desk());
    let (bundle, _) =
        DataBundle::prepare(&all, DESK_SPLIT_SEED, DESK_N_NEG).expect("desk data splits");
    // the study varies alpha around the tuned NCF+UIB LastFM configuration
    let mut template = preset_by_name("ncf+uib@lastfm").expect("preset exists");
    template.max_epochs = ALPHA_MAX_EPOCHS;
    let rows = alpha_study(&template, &ALPHA_LEVELS, &bundle).expect("study trains");

    for w in rows.windows(2) {
        assert!(
            w[1].boundary_mean > w[0].boundary_mean,
            "mean boundary must increase strictly with alpha: \
             alpha {} -> {} gave b {:.4} -> {:.4}",
            w[0].alpha,
            w[1].alpha,
            w[0].boundary_mean,
            w[1].boundary_mean
        );
        assert!(
            w[1].pos_iqr < w[0].pos_iqr,
            "positive-side IQR must shrink strictly with alpha: \
             alpha {} -> {} gave IQR {:.4} -> {:.4}",
            w[0].alpha,
            w[1].alpha,
            w[0].pos_iqr,
            w[1].pos_iqr
        );
    }
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("a={}: b={:.3}, iqr={:.3}", r.alpha, r.boundary_mean, r.pos_iqr))
        .collect();
    println!(
        "[PASS] C8 alpha-study (LastFM-scale desk set): mean b_u strictly increasing and \
         positive-score IQR strictly decreasing over alpha {ALPHA_LEVELS:?} [{}]",
        summary.join("; ")
    );
}

// ===========================================================================
// C9 — bitwise reproducibility of the command-line pipeline
// ===========================================================================

#[test]
fn c9_identical_config_and_seed_reproduce_metric_files_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let bin = env!("CARGO_BIN_EXE_uibrec");
    let sh = |args: &[&str]| {
        let out = std::process::Command::new(bin)
            .args(args)
            .env_remove("UIBREC_OUT")
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "uibrec {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let prepared = root.join("prepared");
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "preset = \"bpr+uib@ml1m\"\n\n[dataset]\nsynth = \"ml1m-desk\"\n\
             prepared = {prepared:?}\n\n[train]\nmax_epochs = 4\n",
            prepared = prepared.to_str().unwrap()
        ),
    )
    .unwrap();
    sh(&["prepare", "--config", config.to_str().unwrap()]);
    let (out_a, out_b) = (root.join("a"), root.join("b"));
    for out in [&out_a, &out_b] {
        sh(&["train", "--config", config.to_str().unwrap(), "--out-root", out.to_str().unwrap()]);
    }

    let run_dir = |root: &Path| -> std::path::PathBuf {
        std::fs::read_dir(root)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.join("manifest.json").exists())
            .expect("run dir written")
    };
    let (dir_a, dir_b) = (run_dir(&out_a), run_dir(&out_b));
    assert_eq!(dir_a.file_name(), dir_b.file_name(), "run dirs must be named identically");
    let mut compared = Vec::new();
    for file in ["metrics-test.csv", "metrics-valid.csv", "history.jsonl", "manifest.json", "checkpoint.json"]
    {
        let a = std::fs::read(dir_a.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        let b = std::fs::read(dir_b.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(a, b, "{file} differs between identical reruns");
        compared.push(file);
    }
    println!(
        "[PASS] C9 reproducibility: two `uibrec train` invocations with the same config and \
         seed produced byte-identical {compared:?}"
    );
}
