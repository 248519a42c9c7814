use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Prepared;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fl::{evaluate_utility, replay_training, replay_valuation, Metric, RoundRecord, ValuationStrategy};
use crate::par;
use crate::seed;
use crate::valuation::{Coalition, ValuationReport, ValueVector};

/// Test accuracy after dismissing a fraction of each round's participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizationResult {
    pub fractions: Vec<f64>,
    pub methods: Vec<String>,
    /// `accuracy[method][fraction]`.
    pub accuracy: Vec<Vec<f64>>,
    /// Accuracy of the original, unfiltered run.
    pub baseline_accuracy: f64,
}

impl SummarizationResult {
    pub fn row(&self, method: &str) -> Option<&[f64]> {
        self.methods.iter().position(|m| m == method).map(|i| self.accuracy[i].as_slice())
    }
}

/// How many of `m` selected participants to drop; at least one is kept.
pub fn dismiss_count(m: usize, q: f64) -> usize {
    ((q * m as f64).round() as usize).min(m.saturating_sub(1))
}

/// Keeps the selected participants with the highest totals, dropping the
/// lowest ones (ties: lower id dropped first).
fn keep_by_value(selected: &Coalition, values: &ValueVector, q: f64) -> Coalition {
    let mut ids = selected.ids().to_vec();
    ids.sort_by(|&a, &b| values.get(a).total_cmp(&values.get(b)).then(a.cmp(&b)));
    let drop = dismiss_count(ids.len(), q);
    Coalition::new(ids.into_iter().skip(drop)).expect("subset of a coalition")
}

fn keep_random(selected: &Coalition, q: f64, seed: u64) -> Coalition {
    let mut ids = selected.ids().to_vec();
    ids.shuffle(&mut seed::rng(seed));
    let drop = dismiss_count(ids.len(), q);
    Coalition::new(ids.into_iter().skip(drop)).expect("subset of a coalition")
}

/// Retrains with the recorded selections, dismissing low-value participants.
///
/// Values are frozen totals of the finished run; `sv_report` supplies the
/// Shapley totals and the LOO totals are recomputed from `rounds`.
pub fn run_summarization(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    rounds: &[RoundRecord],
    sv_report: &ValuationReport,
) -> Result<SummarizationResult> {
    if rounds.is_empty() {
        return Err(Error::Snapshot("summarization needs the recorded rounds".into()));
    }
    let n = cfg.partition.participants;
    let (loo_report, _) = replay_valuation(
        rounds,
        &prepared.validation,
        cfg.training.metric,
        n,
        &ValuationStrategy::Loo,
        cfg.seed,
        false,
    )?;
    let selections: Vec<Coalition> = rounds.iter().map(|r| r.selected.clone()).collect();
    let fractions = cfg.experiment.dismiss_fractions.clone();
    let repeats = cfg.experiment.random_repeats;
    let base_seed = seed::stream(cfg.seed, seed::BASELINE);
    let accuracy_of = |params: &crate::fl::ModelParams| evaluate_utility(params, &prepared.test, Metric::Accuracy);
    let retrain = |keep: &mut dyn FnMut(usize, &Coalition) -> Coalition| {
        replay_training(&prepared.train, &prepared.plan, &cfg.training, &selections, cfg.seed, keep)
            .and_then(|p| accuracy_of(&p))
    };
    let baseline_accuracy = retrain(&mut |_, s| s.clone())?;

    let valued = [("fed-sv", &sv_report.total), ("fed-loo", &loo_report.total)];
    let jobs = fractions.len() * (valued.len() + repeats);
    let results = par::try_map_range(jobs, |job| {
        let (k, qi) = (job / fractions.len(), job % fractions.len());
        let q = fractions[qi];
        if k < valued.len() {
            let values = valued[k].1;
            retrain(&mut |_, s| keep_by_value(s, values, q))
        } else {
            let repeat = (k - valued.len()) as u64;
            let rs = seed::child(seed::child(base_seed, repeat), qi as u64);
            retrain(&mut |t, s| keep_random(s, q, seed::child(rs, t as u64)))
        }
    })
    .map_err(|(_, e)| e)?;

    let mut accuracy: Vec<Vec<f64>> =
        (0..valued.len()).map(|k| results[k * fractions.len()..(k + 1) * fractions.len()].to_vec()).collect();
    let repeat_row = |r: usize| {
        let k = valued.len() + r;
        &results[k * fractions.len()..(k + 1) * fractions.len()]
    };
    // shifted mean: exact when every repeat agrees, as at q = 0
    let first = repeat_row(0).to_vec();
    let random = (0..fractions.len())
        .map(|i| first[i] + (1..repeats).map(|r| repeat_row(r)[i] - first[i]).sum::<f64>() / repeats as f64)
        .collect();
    accuracy.push(random);
    let methods = valued.iter().map(|(m, _)| m.to_string()).chain(["random".to_string()]).collect();
    Ok(SummarizationResult { fractions, methods, accuracy, baseline_accuracy })
}

/// L2 norm of each round's value vector.
pub fn round_contribution_norms(report: &ValuationReport) -> Vec<f64> {
    report.per_round.iter().map(ValueVector::l2_norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::ParticipantId;

    fn ids(c: &Coalition) -> Vec<u32> {
        c.ids().iter().map(|&ParticipantId(i)| i).collect()
    }

    #[test]
    fn dismissal_arithmetic() {
        assert_eq!(dismiss_count(10, 0.0), 0);
        assert_eq!(dismiss_count(10, 0.9), 9);
        assert_eq!(dismiss_count(10, 0.3), 3);
        assert_eq!(dismiss_count(1, 0.9), 0);
    }

    #[test]
    fn lowest_values_dropped() {
        let sel = Coalition::from_ids(&[1, 2, 3, 4]).unwrap();
        let v = ValueVector::from_pairs(
            None,
            [(ParticipantId(1), 0.4), (ParticipantId(2), -0.1), (ParticipantId(3), 0.4), (ParticipantId(4), 0.0)],
        );
        assert_eq!(ids(&keep_by_value(&sel, &v, 0.5)), vec![1, 3]);
        assert_eq!(ids(&keep_by_value(&sel, &v, 0.75)), vec![3]);
        assert_eq!(keep_by_value(&sel, &v, 0.0), sel);
    }

    #[test]
    fn norms_per_round() {
        let r = ValuationReport::from_rounds(
            vec![
                ValueVector::from_pairs(Some(0), [(ParticipantId(0), 0.0)]),
                ValueVector::from_pairs(Some(1), [(ParticipantId(0), -0.5)]),
            ],
            0.0,
            &[0.0, -0.5],
            [ParticipantId(0)],
        );
        assert_eq!(round_contribution_norms(&r), vec![0.0, 0.5]);
    }
}
