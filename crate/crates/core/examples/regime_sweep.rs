//! Scratch experiment: which desk-data regimes reproduce the UIB-over-BPR
//! ordering plus the efficiency/boundary phenomena under the pinned ml1m
//! presets? Not part of the shipped crate.

use uibrec_core::dataset::HoldoutRole;
use uibrec_core::evaluation::{boundary_distribution, boundary_sweep, default_offsets, evaluate};
use uibrec_core::presets::preset_by_name;
use uibrec_core::synth::{generate, SynthSpec};
use uibrec_core::training::{train, DataBundle, TrainOutcome};
use uibrec_core::ExecMode;

const SEEDS: u64 = 2;
const BUDGET: usize = 150;

fn run(preset: &str, seed: u64, bundle: &DataBundle, fixed: bool) -> TrainOutcome {
    let mut config = preset_by_name(preset).unwrap();
    config.max_epochs = BUDGET;
    if fixed {
        config.patience = BUDGET; // emulate the fixed-budget efficiency protocol
    }
    config.seed = seed;
    train(&config, bundle).unwrap()
}

fn main() {
    let regimes: Vec<(&str, f64, f64)> = vec![
        ("A2.0-z0.8", 2.0, 0.8),
        ("A2.5-z0.8", 2.5, 0.8),
        ("A3.0-z0.8", 3.0, 0.8),
        ("A3.0-z1.2", 3.0, 1.2),
    ];
    for (name, affinity, zipf) in regimes {
        let spec = SynthSpec {
            users: 480,
            items: 320,
            groups: 8,
            min_per_user: 16,
            max_per_user: 28,
            affinity,
            zipf,
            seed: 41,
        };
        let all = generate(&spec);
        let (bundle, _) = DataBundle::prepare(&all, 7, 100).unwrap();
        println!("== {name}: {} interactions", all.len());

        // C4 + C5: BPR vs BPR+UIB, fixed budget
        let mut rows = Vec::new();
        for preset in ["bpr@ml1m", "bpr+uib@ml1m"] {
            let mut hit1 = Vec::new();
            let mut ndcg10 = Vec::new();
            let mut late = Vec::new();
            for seed in 0..SEEDS {
                let o = run(preset, seed, &bundle, true);
                let rep = evaluate(
                    &o.state.frozen(),
                    &bundle.candidates,
                    HoldoutRole::Test,
                    &[1, 10],
                    ExecMode::default(),
                )
                .unwrap();
                hit1.push(rep.row(1).unwrap().hit);
                ndcg10.push(rep.row(10).unwrap().ndcg);
                let h = &o.history;
                let from = 3 * h.len() / 4;
                late.push(
                    h[from..].iter().map(|r| r.corrupted_rate).sum::<f64>()
                        / (h.len() - from) as f64,
                );
            }
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "  {preset:<14} hit@1 {:.4}  ndcg@10 {:.4}  late-corrupt {:.4}",
                m(&hit1),
                m(&ndcg10),
                m(&late)
            );
            rows.push((m(&hit1), m(&ndcg10), m(&late)));
        }
        println!(
            "  C4 {}  C5 {}",
            if rows[1].0 > rows[0].0 && rows[1].1 > rows[0].1 { "PASS" } else { "fail" },
            if rows[1].2 > rows[0].2 { "PASS" } else { "fail" },
        );

        // C6 + C7 on NCF+UIB (normal early stopping)
        let o = run("ncf+uib@ml1m", 0, &bundle, false);
        let active: Vec<u32> = bundle.train.active_users().collect();
        let dist = boundary_distribution(&o.state, 24, Some(&active)).unwrap();
        let counts: Vec<u64> = dist.bins.iter().map(|b| b.count).collect();
        println!("  ncf+uib best {} mean-b {:.3} std {:.3} bins {:?}", o.best_epoch, dist.mean, dist.std, counts);
        let observed = [&bundle.train, &bundle.valid, &bundle.test];
        let report = boundary_sweep(
            &o.state.frozen(),
            &observed,
            &default_offsets(),
            ExecMode::default(),
        )
        .unwrap();
        let f1s: Vec<String> =
            report.rows.iter().map(|r| format!("{}:{:.3}", r.offset, r.f1)).collect();
        let best = report.best_offset().unwrap();
        println!(
            "  sweep best {} (f1 {:.3}, P {:.3}, R {:.3}); {}",
            best.offset,
            best.f1,
            best.precision,
            best.recall,
            f1s.join(" ")
        );
    }
}
