use fedsv_core::data::{partition_iid, synth_blobs, DataView, Dataset};
use fedsv_core::fl::make_round_oracle;
use fedsv_core::fl::{
    evaluate_utility, loss_and_grad, mean_loss, read_snapshot_dir, replay_valuation, run_federated_training,
    write_snapshot_dir, Layout, Metric, ModelSpec, SnapshotMeta, TrainingConfig, ValuationStrategy, SNAPSHOT_VERSION,
};
use fedsv_core::valuation::{CoalitionSequence, UtilityOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Dataset {
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(x, d, y, classes).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    for draw in 0..100 {
        let (d, classes) = (rng.random_range(1..6), rng.random_range(2..5));
        let layout = if draw % 2 == 0 {
            Layout::Logistic { inputs: d, classes }
        } else {
            Layout::Mlp { inputs: d, hidden: rng.random_range(1..8), classes }
        };
        let n = rng.random_range(1..9);
        let data = random_batch(&mut rng, n, d, classes);
        let idx: Vec<usize> = (0..data.len()).collect();
        let view = DataView::new(&data, &idx);
        let mut theta: Vec<f64> = (0..layout.param_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut grad = vec![0.0; theta.len()];
        let loss = loss_and_grad(&layout, &theta, view, &mut grad);
        assert!((loss - mean_loss(&layout, &theta, view)).abs() < 1e-12);
        let mut fd = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let orig = theta[k];
            theta[k] = orig + h;
            let up = mean_loss(&layout, &theta, view);
            theta[k] = orig - h;
            let down = mean_loss(&layout, &theta, view);
            theta[k] = orig;
            fd[k] = (up - down) / (2.0 * h);
        }
        let diff: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&grad).max(norm(&fd)).max(1e-12);
        assert!(rel <= 1e-4, "draw {draw} ({layout:?}): relative error {rel}");
    }
}

fn small_run(strategy: ValuationStrategy) -> (Dataset, fedsv_core::fl::TrainingRun) {
    let all = synth_blobs(700, 4, 3, 2.5, 3).unwrap();
    let (train, validation) = (all.slice(0, 500).unwrap(), all.slice(500, 700).unwrap());
    let plan = partition_iid(&train, 10, 4).unwrap();
    let cfg = TrainingConfig {
        rounds: 3,
        participant_fraction: 0.3,
        local_epochs: 1,
        batch_size: 8,
        learning_rate: 0.2,
        model: ModelSpec::Mlp { hidden: 5 },
        ..TrainingConfig::default()
    };
    let run = run_federated_training(&train, &plan, &validation, &cfg, &strategy, 9).unwrap();
    (validation, run)
}

#[test]
fn round_values_telescope_to_total_gain() {
    let (validation, run) = small_run(ValuationStrategy::Exact);
    assert_eq!(run.rounds.len(), 3);
    assert!(run.rounds.iter().all(|r| r.selected.len() == 3));
    let oracle = make_round_oracle(&run.rounds, &validation, Metric::Accuracy).unwrap();
    let full = CoalitionSequence::new(run.rounds.iter().map(|r| r.selected.clone()).collect());
    let final_utility = oracle.evaluate(&full).unwrap();
    assert_eq!(final_utility, evaluate_utility(&run.final_params, &validation, Metric::Accuracy).unwrap());
    let initial = run.report.initial_utility;
    assert!((run.report.total.sum() - (final_utility - initial)).abs() < 1e-9);
    for (t, v) in run.report.per_round.iter().enumerate() {
        assert!((v.sum() - run.report.per_round_utility_delta[t]).abs() < 1e-9);
    }
}

#[test]
fn replay_from_snapshot_is_bit_identical() {
    let (validation, run) = small_run(ValuationStrategy::Exact);
    let dir = tempfile::tempdir().unwrap();
    let meta = SnapshotMeta {
        format_version: SNAPSHOT_VERSION,
        participants: 10,
        rounds: run.rounds.len(),
        metric: Metric::Accuracy,
        master_seed: 9,
        strategy: Some(ValuationStrategy::Exact),
    };
    write_snapshot_dir(dir.path(), &meta, &run.rounds, &validation).unwrap();
    let snap = read_snapshot_dir(dir.path()).unwrap();
    assert_eq!(snap.meta, meta);
    assert_eq!(snap.rounds, run.rounds);
    let (report, _) =
        replay_valuation(&snap.rounds, &snap.validation, snap.meta.metric, 10, &ValuationStrategy::Exact, 9, false)
            .unwrap();
    assert_eq!(report, run.report);
}

#[test]
fn valuation_rule_does_not_change_training() {
    let (_, exact) = small_run(ValuationStrategy::Exact);
    let (_, loo) = small_run(ValuationStrategy::Loo);
    assert_eq!(exact.rounds, loo.rounds);
}

#[test]
fn missing_snapshot_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(read_snapshot_dir(&dir.path().join("absent")).is_err());
}
