use super::engine::{aggregate_subset, RoundRecord};
use super::model::{mean_loss, predict};
use super::{Metric, ModelParams};
use crate::data::{DataView, Dataset};
use crate::error::{Error, Result};
use crate::valuation::{Coalition, UtilityOracle};

/// Validation metric of `params`.
pub fn evaluate_utility(params: &ModelParams, validation: &Dataset, metric: Metric) -> Result<f64> {
    let layout = params.layout;
    if params.theta.len() != layout.param_count()
        || validation.dim() != layout.inputs()
        || validation.class_count() > layout.classes()
    {
        return Err(Error::LayoutMismatch { expected: layout.param_count(), found: params.theta.len() });
    }
    Ok(match metric {
        Metric::Accuracy => {
            let correct =
                (0..validation.len()).filter(|&i| predict(params, validation.row(i)) == validation.label(i)).count();
            correct as f64 / validation.len() as f64
        }
        Metric::NegLoss { cap } => {
            let idx: Vec<usize> = (0..validation.len()).collect();
            (cap - mean_loss(&layout, &params.theta, DataView::new(validation, &idx))).clamp(0.0, cap)
        }
    })
}

/// Utility oracle over recorded rounds.
///
/// `utility(I_1 + … + I_{t−1}, S)` evaluates the average of the round-`t`
/// updates of `S` starting from the stored global model of round `t`.
/// Only the realized history is evaluable.
pub struct RoundOracle<'a> {
    rounds: &'a [RoundRecord],
    validation: &'a Dataset,
    metric: Metric,
}

impl<'a> RoundOracle<'a> {
    pub fn new(rounds: &'a [RoundRecord], validation: &'a Dataset, metric: Metric) -> Result<Self> {
        for (t, pair) in rounds.windows(2).enumerate() {
            if pair[1].round != pair[0].round + 1 || pair[1].global_before != pair[0].global_after {
                return Err(Error::Snapshot(format!("rounds {t} and {} are not consecutive", t + 1)));
            }
        }
        Ok(RoundOracle { rounds, validation, metric })
    }
}

pub fn make_round_oracle<'a>(
    rounds: &'a [RoundRecord],
    validation: &'a Dataset,
    metric: Metric,
) -> Result<RoundOracle<'a>> {
    RoundOracle::new(rounds, validation, metric)
}

impl UtilityOracle for RoundOracle<'_> {
    fn utility(&self, history: &[Coalition], block: &Coalition) -> Result<f64> {
        let t = history.len();
        if t > self.rounds.len() {
            return Err(Error::Oracle(format!("history of {t} rounds exceeds the {} recorded", self.rounds.len())));
        }
        if let Some(j) = history.iter().zip(self.rounds).position(|(h, r)| *h != r.selected) {
            return Err(Error::Oracle(format!("history block {j} differs from the realized selection")));
        }
        if t == self.rounds.len() {
            if !block.is_empty() {
                return Err(Error::Oracle(format!("round {t} was not recorded")));
            }
            let last = self.rounds.last().ok_or_else(|| Error::Oracle("no rounds recorded".into()))?;
            return evaluate_utility(&last.global_after, self.validation, self.metric);
        }
        let params = aggregate_subset(&self.rounds[t], block).map_err(|e| Error::Oracle(e.to_string()))?;
        evaluate_utility(&params, self.validation, self.metric)
    }

    fn range_bound(&self) -> f64 {
        self.metric.range_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::Layout;

    #[test]
    fn constant_prediction_on_balanced_set() {
        let ds = Dataset::new(vec![1.0, -1.0, 2.0, -2.0], 1, vec![0, 1, 0, 1], 2).unwrap();
        // bias favours class 1 regardless of input
        let p = ModelParams::new(Layout::Logistic { inputs: 1, classes: 2 }, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(evaluate_utility(&p, &ds, Metric::Accuracy).unwrap(), 0.5);
        // w = (-1, +1) separates the signs perfectly
        let q = ModelParams::new(Layout::Logistic { inputs: 1, classes: 2 }, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(evaluate_utility(&q, &ds, Metric::Accuracy).unwrap(), 1.0);
        let u = evaluate_utility(&q, &ds, Metric::NegLoss { cap: 3.0 }).unwrap();
        assert!(u > 0.0 && u <= 3.0);
    }

    #[test]
    fn layout_mismatch() {
        let ds = Dataset::new(vec![1.0, -1.0], 2, vec![0], 2).unwrap();
        let p = ModelParams::new(Layout::Logistic { inputs: 1, classes: 2 }, vec![0.0; 4]).unwrap();
        assert!(evaluate_utility(&p, &ds, Metric::Accuracy).is_err());
    }
}
