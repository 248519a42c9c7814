use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{prepare, Prepared};
use crate::config::ExperimentConfig;
use crate::data::triggered_test_set;
use crate::error::{Error, Result};
use crate::fl::{evaluate_utility, replay_valuation, run_federated_training, Metric, TrainingRun, ValuationStrategy};
use crate::par;
use crate::seed;
use crate::valuation::{ParticipantId, ValuationReport, ValueVector};

/// Recall of the bad participants after inspecting the lowest-valued ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub inspected: Vec<f64>,
    pub detected: Vec<f64>,
    pub auc: f64,
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0).sum()
}

fn curve_from_order(order: &[u32], bad: &[u32]) -> DetectionCurve {
    let n = order.len();
    let mut inspected = Vec::with_capacity(n + 1);
    let mut detected = Vec::with_capacity(n + 1);
    inspected.push(0.0);
    detected.push(0.0);
    let mut hits = 0usize;
    for (k, id) in order.iter().enumerate() {
        if bad.contains(id) {
            hits += 1;
        }
        inspected.push((k + 1) as f64 / n as f64);
        detected.push(hits as f64 / bad.len() as f64);
    }
    let auc = trapezoid(&inspected, &detected);
    DetectionCurve { inspected, detected, auc }
}

/// Ranks `participants` ids by ascending value (ties by ascending id) and
/// traces the fraction of `bad` found as the ranking is inspected.
pub fn detection_curve(values: &ValueVector, participants: usize, bad: &[u32]) -> Result<DetectionCurve> {
    if bad.is_empty() {
        return Err(Error::param("detection needs at least one ground-truth bad participant"));
    }
    if let Some(&b) = bad.iter().find(|&&b| b as usize >= participants) {
        return Err(Error::param(format!("bad participant {b} outside {participants} participants")));
    }
    let mut order: Vec<u32> = (0..participants as u32).collect();
    order.sort_by(|&a, &b| values.get(ParticipantId(a)).total_cmp(&values.get(ParticipantId(b))).then(a.cmp(&b)));
    Ok(curve_from_order(&order, bad))
}

/// Pointwise mean of `shuffles` curves over uniformly random rankings.
pub fn random_detection_curve(participants: usize, bad: &[u32], shuffles: usize, seed: u64) -> Result<DetectionCurve> {
    if bad.is_empty() || shuffles == 0 {
        return Err(Error::param("random baseline needs bad participants and at least one shuffle"));
    }
    let curves = par::map_range(shuffles, |s| {
        let mut order: Vec<u32> = (0..participants as u32).collect();
        order.shuffle(&mut seed::task_rng(seed, s as u64));
        curve_from_order(&order, bad)
    });
    let mut detected = vec![0.0; participants + 1];
    for c in &curves {
        detected.iter_mut().zip(&c.detected).for_each(|(d, x)| *d += x);
    }
    detected.iter_mut().for_each(|d| *d /= shuffles as f64);
    let inspected = curves[0].inspected.clone();
    let auc = trapezoid(&inspected, &detected);
    Ok(DetectionCurve { inspected, detected, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: String,
    pub curve: DetectionCurve,
}

#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub bad: Vec<u32>,
    pub curves: Vec<MethodCurve>,
    pub sv_report: ValuationReport,
    pub loo_report: ValuationReport,
    pub run: TrainingRun,
    /// Clean test accuracy of the final global model.
    pub test_accuracy: f64,
    /// Share of triggered test samples classified as the target (backdoor only).
    pub attack_success_rate: Option<f64>,
}

impl DetectionOutcome {
    pub fn auc(&self, method: &str) -> Option<f64> {
        self.curves.iter().find(|c| c.method == method).map(|c| c.curve.auc)
    }
}

/// Shapley estimator for the detection runs: the configured one when it is
/// a Shapley method, exact otherwise.
fn shapley_strategy(cfg: &ExperimentConfig) -> Result<ValuationStrategy> {
    Ok(match cfg.valuation.strategy()? {
        s @ (ValuationStrategy::Exact | ValuationStrategy::Permutation(_) | ValuationStrategy::GroupTesting(_)) => s,
        _ => ValuationStrategy::Exact,
    })
}

/// Trains once and values the same rounds with every method.
pub fn run_detection(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<DetectionOutcome> {
    let bad = prepared.bad().to_vec();
    let n = cfg.partition.participants;
    let metric = cfg.training.metric;
    let run = run_federated_training(
        &prepared.train,
        &prepared.plan,
        &prepared.validation,
        &cfg.training,
        &shapley_strategy(cfg)?,
        cfg.seed,
    )?;
    let sv_report = run.report.clone();
    let (loo_report, _) =
        replay_valuation(&run.rounds, &prepared.validation, metric, n, &ValuationStrategy::Loo, cfg.seed, false)?;
    let (random_report, _) =
        replay_valuation(&run.rounds, &prepared.validation, metric, n, &ValuationStrategy::Random, cfg.seed, false)?;
    let mut curves = Vec::new();
    let named = [
        ("fed-sv", &sv_report.total),
        ("fed-sv-normalized", &sv_report.normalized().total),
        ("fed-loo", &loo_report.total),
        ("fed-loo-normalized", &loo_report.normalized().total),
        ("random-values", &random_report.total),
    ];
    for (method, values) in named {
        curves.push(MethodCurve { method: method.to_string(), curve: detection_curve(values, n, &bad)? });
    }
    curves.push(MethodCurve {
        method: "random".to_string(),
        curve: random_detection_curve(n, &bad, cfg.experiment.random_shuffles, seed::stream(cfg.seed, seed::BASELINE))?,
    });
    let test_accuracy = evaluate_utility(&run.final_params, &prepared.test, Metric::Accuracy)?;
    let attack_success_rate = match &prepared.corruption {
        Some(spec @ crate::data::CorruptionSpec::Backdoor(_)) => {
            let triggered = triggered_test_set(&prepared.test, spec)?;
            Some(evaluate_utility(&run.final_params, &triggered, Metric::Accuracy)?)
        }
        _ => None,
    };
    Ok(DetectionOutcome { bad, curves, sv_report, loo_report, run, test_accuracy, attack_success_rate })
}

fn require_corruption(cfg: &ExperimentConfig, kind: crate::config::CorruptionKind) -> Result<()> {
    match &cfg.corruption {
        Some(c) if c.kind == kind => Ok(()),
        _ => Err(Error::Config {
            path: "corruption.kind".into(),
            message: format!("this experiment needs a {kind:?} corruption"),
        }),
    }
}

pub fn run_noisy_detection(cfg: &ExperimentConfig) -> Result<DetectionOutcome> {
    require_corruption(cfg, crate::config::CorruptionKind::LabelFlip)?;
    run_detection(cfg, &prepare(cfg)?)
}

pub fn run_backdoor_detection(cfg: &ExperimentConfig) -> Result<DetectionOutcome> {
    require_corruption(cfg, crate::config::CorruptionKind::Backdoor)?;
    run_detection(cfg, &prepare(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(v: &[f64]) -> ValueVector {
        ValueVector::from_pairs(None, v.iter().enumerate().map(|(i, &x)| (ParticipantId(i as u32), x)))
    }

    #[test]
    fn lowest_bad_reaches_one_early() {
        let c = detection_curve(&values(&[0.5, -1.0, 0.3, -2.0]), 4, &[1, 3]).unwrap();
        assert_eq!(c.detected, vec![0.0, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(c.inspected[2], 0.5);
        assert!((c.auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn last_ranked_bad_found_at_end() {
        let c = detection_curve(&values(&[0.1, 0.2, 0.3, 0.9]), 4, &[3]).unwrap();
        assert_eq!(c.detected, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.inspected.last(), Some(&1.0));
    }

    #[test]
    fn ties_break_by_id() {
        let c = detection_curve(&values(&[0.0, 0.0, 0.0]), 3, &[0]).unwrap();
        assert_eq!(c.detected[1], 1.0);
    }

    #[test]
    fn missing_ids_count_as_zero() {
        let v = ValueVector::from_pairs(None, [(ParticipantId(0), 1.0)]);
        let c = detection_curve(&v, 3, &[2]).unwrap();
        assert_eq!(c.detected[2], 1.0);
    }

    #[test]
    fn empty_truth_refused() {
        assert!(detection_curve(&values(&[1.0]), 1, &[]).is_err());
    }

    #[test]
    fn random_curve_is_diagonal_on_average() {
        let c = random_detection_curve(20, &[1, 5, 7, 11, 13, 19], 2000, 9).unwrap();
        assert!((c.auc - 0.5).abs() < 0.02, "auc {}", c.auc);
        assert_eq!(c.detected[0], 0.0);
        assert_eq!(*c.detected.last().unwrap(), 1.0);
    }
}
