use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::loss_and_grad;
use super::oracle::{evaluate_utility, RoundOracle};
use super::{Metric, ModelParams, TrainingConfig};
use crate::data::{DataView, Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::estimators::{
    group_testing_plan, group_testing_round, permutation_sample_count, permutation_sampling_round, ApproxParams,
    CachedOracle,
};
use crate::par;
use crate::seed;
use crate::valuation::{
    exact_federated_round_shapley, federated_loo_round, Coalition, ParticipantId, ValuationReport, ValueVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantUpdate {
    pub participant: ParticipantId,
    pub round: usize,
    pub params: ModelParams,
}

/// Everything needed to re-evaluate any coalition of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub global_before: ModelParams,
    pub selected: Coalition,
    /// Sorted by participant id, one per selected participant.
    pub updates: Vec<ParticipantUpdate>,
    pub global_after: ModelParams,
}

impl RoundRecord {
    pub fn update_of(&self, id: ParticipantId) -> Option<&ParticipantUpdate> {
        self.updates.binary_search_by_key(&id, |u| u.participant).ok().map(|i| &self.updates[i])
    }
}

/// Model obtained by averaging the updates of `subset`; the round's starting
/// model for the empty subset.
pub fn aggregate_subset(round: &RoundRecord, subset: &Coalition) -> Result<ModelParams> {
    if subset.is_empty() {
        return Ok(round.global_before.clone());
    }
    let mut theta = vec![0.0; round.global_before.theta.len()];
    for &id in subset.ids() {
        let u = round
            .update_of(id)
            .ok_or_else(|| Error::Coalition(format!("participant {id} was not selected in round {}", round.round)))?;
        for (acc, x) in theta.iter_mut().zip(&u.params.theta) {
            *acc += x;
        }
    }
    let n = subset.len() as f64;
    theta.iter_mut().for_each(|x| *x /= n);
    Ok(ModelParams { layout: round.global_before.layout, theta })
}

/// Number of participants per round: `max(⌈C·N⌉, 1)`.
pub fn selection_size(participants: usize, fraction: f64) -> usize {
    // tolerance absorbs products such as 0.3 · 10 = 3.0000000000000004
    let m = (fraction * participants as f64 - 1e-9).ceil() as usize;
    m.clamp(1, participants.max(1))
}

pub fn select_participants(participants: usize, fraction: f64, round: usize, master_seed: u64) -> Coalition {
    let m = selection_size(participants, fraction);
    let mut rng = seed::task_rng(seed::stream(master_seed, seed::SELECTION), round as u64);
    let picked = rand::seq::index::sample(&mut rng, participants, m);
    Coalition::new(picked.into_iter().map(|i| ParticipantId(i as u32))).expect("sampled ids are distinct")
}

fn local_seed(master_seed: u64, round: usize, participant: ParticipantId) -> u64 {
    seed::child(seed::child(seed::stream(master_seed, seed::LOCAL_SGD), round as u64), u64::from(participant.0))
}

/// Mini-batch SGD from `global` on the participant's shard.
pub fn participant_update(
    global: &ModelParams,
    shard: DataView<'_>,
    cfg: &TrainingConfig,
    round: usize,
    participant: ParticipantId,
    rng_seed: u64,
) -> Result<ParticipantUpdate> {
    if shard.is_empty() {
        return Err(Error::Training(format!("participant {participant} has no local data")));
    }
    let layout = global.layout;
    if shard.data.dim() != layout.inputs() || shard.data.class_count() != layout.classes() {
        return Err(Error::LayoutMismatch { expected: layout.inputs(), found: shard.data.dim() });
    }
    let lr = cfg.learning_rate_at(round);
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::param(format!("invalid learning rate {lr}")));
    }
    let mut rng = seed::rng(rng_seed);
    let mut theta = global.theta.clone();
    let mut grad = vec![0.0; theta.len()];
    let mut order = shard.indices.to_vec();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            loss_and_grad(&layout, &theta, DataView::new(shard.data, batch), &mut grad);
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= lr * g;
            }
        }
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence { round, participant: participant.0 });
    }
    Ok(ParticipantUpdate { participant, round, params: ModelParams { layout, theta } })
}

fn train_round(
    global: &ModelParams,
    train: &Dataset,
    plan: &PartitionPlan,
    cfg: &TrainingConfig,
    round: usize,
    selected: &Coalition,
    master_seed: u64,
) -> Result<RoundRecord> {
    let updates = par::map_slice(selected.ids(), |&id| {
        let shard = plan
            .assignment
            .get(id.0 as usize)
            .ok_or_else(|| Error::Training(format!("participant {id} has no partition")))?;
        participant_update(global, DataView::new(train, shard), cfg, round, id, local_seed(master_seed, round, id))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut record = RoundRecord {
        round,
        global_before: global.clone(),
        selected: selected.clone(),
        updates,
        global_after: global.clone(),
    };
    record.global_after = aggregate_subset(&record, selected)?;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValuationStrategy {
    None,
    Exact,
    Permutation(ApproxParams),
    GroupTesting(ApproxParams),
    Loo,
    /// Uniform random values; the uninformed baseline.
    Random,
}

/// Sample counts used to value one round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub selected: usize,
    pub utility_evaluations: Option<usize>,
    pub permutation_samples: Option<usize>,
    pub t1: Option<usize>,
    pub t2: Option<usize>,
    pub q_tot: Option<f64>,
    /// Group-testing test utilities, kept only in verbose mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_utilities: Option<Vec<f64>>,
}

/// Values round `round` of `rounds` (which must contain it and all earlier rounds).
pub fn value_round(
    rounds: &[RoundRecord],
    validation: &Dataset,
    metric: Metric,
    round: usize,
    strategy: &ValuationStrategy,
    master_seed: u64,
    verbose: bool,
) -> Result<(ValueVector, RoundDiagnostics)> {
    let oracle = RoundOracle::new(&rounds[..=round], validation, metric)?;
    let history: Vec<Coalition> = rounds[..round].iter().map(|r| r.selected.clone()).collect();
    let players = &rounds[round].selected;
    let m = players.len();
    let est_seed = seed::child(seed::stream(master_seed, seed::ESTIMATOR), round as u64);
    let mut diag = RoundDiagnostics { round, selected: m, ..Default::default() };
    let t = Some(round);
    let values = match strategy {
        ValuationStrategy::None => ValueVector::new(t),
        ValuationStrategy::Exact => {
            diag.utility_evaluations = Some(1 << m);
            exact_federated_round_shapley(&oracle, &history, players, t)?
        }
        ValuationStrategy::Loo => {
            diag.utility_evaluations = Some(m + 1);
            federated_loo_round(&oracle, &history, players, t)?
        }
        ValuationStrategy::Permutation(p) => {
            let count = permutation_sample_count(p, m)?;
            diag.permutation_samples = Some(count);
            diag.utility_evaluations = Some(count * m);
            let cached = CachedOracle::new(&oracle);
            permutation_sampling_round(&cached, &history, players, count, est_seed, t)?
        }
        ValuationStrategy::GroupTesting(p) if m >= 2 => {
            let plan = group_testing_plan(m, p)?;
            diag.t1 = Some(plan.t1);
            diag.t2 = Some(plan.t2);
            diag.q_tot = Some(plan.q_tot);
            diag.utility_evaluations = Some(plan.total_evaluations());
            let cached = CachedOracle::new(&oracle);
            let est = group_testing_round(&cached, &history, players, &plan, est_seed, t)?;
            if verbose {
                diag.test_utilities = Some(est.tests.utilities.clone());
            }
            est.values
        }
        // a single participant's value is its marginal gain
        ValuationStrategy::GroupTesting(_) => exact_federated_round_shapley(&oracle, &history, players, t)?,
        ValuationStrategy::Random => {
            let mut rng = seed::task_rng(seed::stream(master_seed, seed::BASELINE), round as u64);
            ValueVector::from_pairs(t, players.ids().iter().map(|&id| (id, rng.random::<f64>())))
        }
    };
    Ok((values, diag))
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub final_params: ModelParams,
    pub report: ValuationReport,
    pub rounds: Vec<RoundRecord>,
    pub diagnostics: Vec<RoundDiagnostics>,
}

fn initial_model(train: &Dataset, cfg: &TrainingConfig, master_seed: u64) -> ModelParams {
    cfg.model.layout(train.dim(), train.class_count()).init(&mut seed::rng(seed::stream(master_seed, seed::MODEL_INIT)))
}

pub fn run_federated_training(
    train: &Dataset,
    plan: &PartitionPlan,
    validation: &Dataset,
    cfg: &TrainingConfig,
    strategy: &ValuationStrategy,
    master_seed: u64,
) -> Result<TrainingRun> {
    run_federated_training_with(train, plan, validation, cfg, strategy, master_seed, false, |_, _| Ok(()))
}

/// Runs FedAvg for `cfg.rounds` rounds, valuing each round right after it
/// is aggregated. `observer` sees every completed round (e.g. to persist it)
/// before the next one starts.
#[allow(clippy::too_many_arguments)]
pub fn run_federated_training_with(
    train: &Dataset,
    plan: &PartitionPlan,
    validation: &Dataset,
    cfg: &TrainingConfig,
    strategy: &ValuationStrategy,
    master_seed: u64,
    verbose: bool,
    mut observer: impl FnMut(&RoundRecord, &ValueVector) -> Result<()>,
) -> Result<TrainingRun> {
    cfg.validate()?;
    let n = plan.participant_count;
    if n == 0 || plan.assignment.len() != n {
        return Err(Error::param("partition plan does not cover its participants"));
    }
    let mut global = initial_model(train, cfg, master_seed);
    let initial_utility = evaluate_utility(&global, validation, cfg.metric)?;
    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(cfg.rounds);
    let mut per_round = Vec::with_capacity(cfg.rounds);
    let mut utilities = Vec::with_capacity(cfg.rounds);
    let mut diagnostics = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let selected = select_participants(n, cfg.participant_fraction, t, master_seed);
        let record = train_round(&global, train, plan, cfg, t, &selected, master_seed)?;
        global = record.global_after.clone();
        rounds.push(record);
        let (values, diag) = value_round(&rounds, validation, cfg.metric, t, strategy, master_seed, verbose)?;
        observer(&rounds[t], &values)?;
        utilities.push(evaluate_utility(&global, validation, cfg.metric)?);
        per_round.push(values);
        diagnostics.push(diag);
    }
    let report = ValuationReport::from_rounds(per_round, initial_utility, &utilities, (0..n as u32).map(ParticipantId));
    Ok(TrainingRun { final_params: global, report, rounds, diagnostics })
}

/// Re-values recorded rounds without retraining.
pub fn replay_valuation(
    rounds: &[RoundRecord],
    validation: &Dataset,
    metric: Metric,
    participants: usize,
    strategy: &ValuationStrategy,
    master_seed: u64,
    verbose: bool,
) -> Result<(ValuationReport, Vec<RoundDiagnostics>)> {
    if rounds.is_empty() {
        return Err(Error::Snapshot("no rounds to value".into()));
    }
    let initial_utility = evaluate_utility(&rounds[0].global_before, validation, metric)?;
    let mut per_round = Vec::with_capacity(rounds.len());
    let mut diagnostics = Vec::with_capacity(rounds.len());
    let mut utilities = Vec::with_capacity(rounds.len());
    for t in 0..rounds.len() {
        let (values, diag) = value_round(rounds, validation, metric, t, strategy, master_seed, verbose)?;
        utilities.push(evaluate_utility(&rounds[t].global_after, validation, metric)?);
        per_round.push(values);
        diagnostics.push(diag);
    }
    let report = ValuationReport::from_rounds(
        per_round,
        initial_utility,
        &utilities,
        (0..participants as u32).map(ParticipantId),
    );
    Ok((report, diagnostics))
}

/// Retrains with the recorded per-round selections, keeping only the
/// participants returned by `keep`. Local seeds match the original run, so
/// keeping everyone reproduces it bit for bit.
pub fn replay_training(
    train: &Dataset,
    plan: &PartitionPlan,
    cfg: &TrainingConfig,
    selections: &[Coalition],
    master_seed: u64,
    mut keep: impl FnMut(usize, &Coalition) -> Coalition,
) -> Result<ModelParams> {
    cfg.validate()?;
    let mut global = initial_model(train, cfg, master_seed);
    for (t, selected) in selections.iter().enumerate() {
        let kept = keep(t, selected);
        if kept.is_empty() || !kept.is_subset_of(selected) {
            return Err(Error::Coalition(format!("round {t}: kept set must be a non-empty subset of the selection")));
        }
        global = train_round(&global, train, plan, cfg, t, &kept, master_seed)?.global_after;
    }
    Ok(global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_iid, synth_blobs};
    use crate::fl::Layout;

    #[test]
    fn selection_sizes() {
        assert_eq!(selection_size(100, 0.1), 10);
        assert_eq!(selection_size(10, 0.3), 3);
        assert_eq!(selection_size(20, 0.5), 10);
        assert_eq!(selection_size(7, 0.01), 1);
        assert_eq!(selection_size(7, 1.0), 7);
    }

    #[test]
    fn selection_is_seeded() {
        let a = select_participants(20, 0.5, 3, 1);
        assert_eq!(a, select_participants(20, 0.5, 3, 1));
        assert_eq!(a.len(), 10);
        assert_ne!(a, select_participants(20, 0.5, 4, 1));
    }

    fn record() -> RoundRecord {
        let layout = Layout::Logistic { inputs: 1, classes: 2 };
        let p = |v: [f64; 4]| ModelParams::new(layout, v.to_vec()).unwrap();
        let updates = vec![
            ParticipantUpdate { participant: ParticipantId(1), round: 0, params: p([1.0, 0.0, 0.0, 0.0]) },
            ParticipantUpdate { participant: ParticipantId(4), round: 0, params: p([0.0, 1.0, 0.0, 2.0]) },
        ];
        RoundRecord {
            round: 0,
            global_before: p([0.0; 4]),
            selected: Coalition::from_ids(&[1, 4]).unwrap(),
            updates,
            global_after: p([0.5, 0.5, 0.0, 1.0]),
        }
    }

    #[test]
    fn subset_aggregation() {
        let r = record();
        assert_eq!(aggregate_subset(&r, &r.selected).unwrap(), r.global_after);
        let single = aggregate_subset(&r, &Coalition::from_ids(&[4]).unwrap()).unwrap();
        assert_eq!(single, r.updates[1].params);
        assert_eq!(aggregate_subset(&r, &Coalition::empty()).unwrap(), r.global_before);
        assert!(aggregate_subset(&r, &Coalition::from_ids(&[2]).unwrap()).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_global() {
        let ds = synth_blobs(50, 3, 2, 2.0, 0).unwrap();
        let global = Layout::Logistic { inputs: 3, classes: 2 }.init(&mut seed::rng(0));
        let global = ModelParams::new(global.layout, vec![0.3; global.theta.len()]).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let cfg = TrainingConfig { learning_rate: 0.0, local_epochs: 3, ..Default::default() };
        let u = participant_update(&global, DataView::new(&ds, &idx), &cfg, 0, ParticipantId(0), 1).unwrap();
        assert_eq!(u.params, global);
    }

    #[test]
    fn empty_shard_and_divergence() {
        let ds = synth_blobs(50, 3, 2, 2.0, 0).unwrap();
        let global = Layout::Logistic { inputs: 3, classes: 2 }.init(&mut seed::rng(0));
        let cfg = TrainingConfig::default();
        assert!(participant_update(&global, DataView::new(&ds, &[]), &cfg, 0, ParticipantId(0), 1).is_err());
        let wild = TrainingConfig { learning_rate: 1e308, ..Default::default() };
        let idx: Vec<usize> = (0..50).collect();
        match participant_update(&global, DataView::new(&ds, &idx), &wild, 2, ParticipantId(5), 1) {
            Err(Error::Divergence { round: 2, participant: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn valuation_does_not_touch_training() {
        let ds = synth_blobs(400, 4, 3, 1.5, 2).unwrap();
        let val = synth_blobs(200, 4, 3, 1.5, 2).unwrap();
        let plan = partition_iid(&ds, 8, 1).unwrap();
        let cfg = TrainingConfig { rounds: 3, participant_fraction: 0.5, ..Default::default() };
        let a = run_federated_training(&ds, &plan, &val, &cfg, &ValuationStrategy::None, 4).unwrap();
        let b = run_federated_training(&ds, &plan, &val, &cfg, &ValuationStrategy::Exact, 4).unwrap();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.rounds, b.rounds);
        for r in &b.rounds {
            assert_eq!(aggregate_subset(r, &r.selected).unwrap(), r.global_after);
        }
        let selections: Vec<Coalition> = b.rounds.iter().map(|r| r.selected.clone()).collect();
        let again = replay_training(&ds, &plan, &cfg, &selections, 4, |_, s| s.clone()).unwrap();
        assert_eq!(again, b.final_params);
    }
}
