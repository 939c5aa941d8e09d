mod common;

use common::*;
use rand::Rng;
use supclust::harness::{mean_and_stderr, probe_objective, stratified_split, Regime, StepRecord};
use supclust::{
    make_blobs, run_al_loop, summarize_runs, train_linear_probe, ALRunRecord, BlobParams, BudgetSchedule, EmbeddingSet,
    Error, ImbalanceProfile, LabeledPool, Matrix, ProbeHyper, RunOptions, StrategyConfig, StrategyKind,
};

/// Central finite differences of the objective for every weight and bias entry.
fn finite_difference(weights: &Matrix, bias: &[f64], x: &Matrix, y: &[usize], l2: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 1e-6;
    let mut gw = Vec::new();
    for idx in 0..weights.as_slice().len() {
        let mut plus = weights.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[idx] += h;
        minus[idx] -= h;
        let fp = probe_objective(&Matrix::from_vec(weights.rows(), weights.cols(), plus), bias, x, y, l2).0;
        let fm = probe_objective(&Matrix::from_vec(weights.rows(), weights.cols(), minus), bias, x, y, l2).0;
        gw.push((fp - fm) / (2.0 * h));
    }
    let mut gb = Vec::new();
    for c in 0..bias.len() {
        let mut plus = bias.to_vec();
        let mut minus = bias.to_vec();
        plus[c] += h;
        minus[c] -= h;
        gb.push((probe_objective(weights, &plus, x, y, l2).0 - probe_objective(weights, &minus, x, y, l2).0) / (2.0 * h));
    }
    (gw, gb)
}

fn grad_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()).max(1e-3)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(41);
    for _ in 0..5 {
        let x = random_matrix(&mut r, 10, 4, 1.0);
        let y: Vec<usize> = (0..10).map(|_| r.gen_range(0..3)).collect();
        let w = random_matrix(&mut r, 3, 4, 0.5);
        let b: Vec<f64> = (0..3).map(|_| r.gen_range(-0.5..0.5)).collect();
        let (_, gw, gb) = probe_objective(&w, &b, &x, &y, 0.01);
        let (nw, nb) = finite_difference(&w, &b, &x, &y, 0.01);
        for (a, n) in gw.as_slice().iter().zip(&nw) {
            assert!(grad_close(*a, *n), "{a} vs {n}");
        }
        for (a, n) in gb.iter().zip(&nb) {
            assert!(grad_close(*a, *n), "{a} vs {n}");
        }
    }
}

fn blobs(k: usize, per: usize, dim: usize, std: f64, seed: u64) -> EmbeddingSet {
    make_blobs(
        &ImbalanceProfile::new(k, per, 1.0),
        &BlobParams { dim, center_spread: 5.0, cluster_std: std, seed },
    )
    .unwrap()
}

#[test]
fn probabilities_are_normalized_and_loss_decreases() {
    let data = blobs(3, 20, 4, 1.5, 42);
    let pool = LabeledPool::new((0..60).step_by(3), 60).unwrap();
    let probe = train_linear_probe(&data, &pool, &ProbeHyper { learning_rate: 0.01, epochs: 300, l2: 1e-3 }).unwrap();
    for w in probe.loss_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss rose: {w:?}");
    }
    let p = probe.predict_proba(&data);
    for row in p.iter_rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert!(probe.weights.as_slice().iter().all(|w| w.is_finite()));
}

#[test]
fn random_on_separable_blobs_is_perfect() {
    let data = blobs(2, 30, 2, 0.05, 43);
    let rec = run_al_loop(
        &data,
        &StrategyConfig::new(StrategyKind::Random),
        &BudgetSchedule::tiny(2, 4),
        &RunOptions::new(1),
    )
    .unwrap();
    assert!(rec.steps.iter().all(|s| s.test_accuracy == 1.0), "{:?}", rec.steps);
}

#[test]
fn tiny_schedule_labeled_counts() {
    let data = make_blobs(
        &ImbalanceProfile::new(10, 40, 4.0),
        &BlobParams { dim: 4, center_spread: 1.0, cluster_std: 0.3, seed: 44 },
    )
    .unwrap();
    let rec = run_al_loop(&data, &StrategyConfig::new(StrategyKind::Supclust), &BudgetSchedule::tiny(10, 5), &RunOptions::new(2))
        .unwrap();
    let counts: Vec<usize> = rec.steps.iter().map(|s| s.labeled_count).collect();
    assert_eq!(counts, vec![10, 20, 30, 40, 50]);
    for s in &rec.steps {
        assert!((0.0..=1.0).contains(&s.test_accuracy));
    }
}

#[test]
fn queries_never_touch_the_test_split() {
    let data = blobs(3, 30, 3, 1.0, 45);
    let options = RunOptions::new(9);
    let (_, test) = stratified_split(&data, options.test_fraction, supclust::harness::derive_seed(9, 0)).unwrap();
    for kind in StrategyKind::ALL {
        let rec = run_al_loop(&data, &StrategyConfig::new(kind), &BudgetSchedule::small(3, 3), &options).unwrap();
        let queried: Vec<usize> = rec.steps.iter().flat_map(|s| s.queried.iter().copied()).collect();
        assert!(queried.iter().all(|q| test.binary_search(q).is_err()), "{kind}");
        let mut dedup = queried.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), queried.len());
        let present: usize = rec.steps[0].per_class_accuracy.len();
        assert_eq!(present, 3);
    }
}

#[test]
fn runs_are_bitwise_deterministic() {
    let data = blobs(4, 25, 3, 1.0, 46);
    for kind in [StrategyKind::Supclust, StrategyKind::Margin, StrategyKind::Probcover] {
        let go = || run_al_loop(&data, &StrategyConfig::new(kind), &BudgetSchedule::tiny(4, 3), &RunOptions::new(5)).unwrap();
        let (a, b) = (go(), go());
        assert_eq!(a, b);
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.test_accuracy.to_bits(), y.test_accuracy.to_bits());
        }
    }
}

fn fake_record(kind: StrategyKind, seed: u64, acc: &[f64], schedule: BudgetSchedule) -> ALRunRecord {
    ALRunRecord {
        strategy: kind,
        seed,
        schedule,
        steps: acc
            .iter()
            .enumerate()
            .map(|(k, &a)| StepRecord {
                step: k + 1,
                labeled_count: (k + 1) * schedule.step_size,
                test_accuracy: a,
                per_class_accuracy: vec![],
                mean_per_class_accuracy: a,
                queried: vec![],
            })
            .collect(),
    }
}

#[test]
fn summary_two_point_formula() {
    let s = BudgetSchedule::tiny(2, 1);
    let rows = summarize_runs(&[
        fake_record(StrategyKind::Random, 0, &[0.4], s),
        fake_record(StrategyKind::Random, 1, &[0.6], s),
    ])
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].mean_acc - 0.5).abs() < 1e-15);
    assert!((rows[0].stderr_acc - 0.1).abs() < 1e-15);
    let single = summarize_runs(&[fake_record(StrategyKind::Random, 0, &[0.3, 0.7], s)]);
    assert!(single.is_err(), "step count must match the schedule");
}

#[test]
fn summary_single_record_and_mixed_schedules() {
    let s = BudgetSchedule::tiny(2, 2);
    let rows = summarize_runs(&[fake_record(StrategyKind::Supclust, 0, &[0.3, 0.7], s)]).unwrap();
    assert_eq!(rows.iter().map(|r| r.mean_acc).collect::<Vec<_>>(), vec![0.3, 0.7]);
    assert!(rows.iter().all(|r| r.stderr_acc == 0.0));
    let other = BudgetSchedule { regime: Regime::Small, step_size: 10, num_steps: 2 };
    let err = summarize_runs(&[fake_record(StrategyKind::Supclust, 0, &[0.3, 0.7], s), fake_record(StrategyKind::Random, 0, &[0.3, 0.7], other)])
        .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn summary_matches_raw_recomputation() {
    let data = blobs(3, 30, 3, 1.5, 47);
    let schedule = BudgetSchedule::tiny(3, 3);
    let records: Vec<ALRunRecord> = (0..10)
        .map(|seed| run_al_loop(&data, &StrategyConfig::new(StrategyKind::Random), &schedule, &RunOptions::new(seed)).unwrap())
        .collect();
    let rows = summarize_runs(&records).unwrap();
    for (k, row) in rows.iter().enumerate() {
        let raw: Vec<f64> = records.iter().map(|r| r.steps[k].test_accuracy).collect();
        let mean = raw.iter().sum::<f64>() / 10.0;
        let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0;
        assert!((row.mean_acc - mean).abs() <= 1e-12);
        assert!((row.stderr_acc - (var / 10.0).sqrt()).abs() <= 1e-12);
        assert_eq!(mean_and_stderr(&raw).0, row.mean_acc);
    }
}
