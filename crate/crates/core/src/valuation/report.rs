use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ParticipantId, ValueVector};
use crate::error::{Error, Result};

/// Per-round values, their sum over rounds and per-round diagnostics.
///
/// `initial_utility` is `U(∅)`, the utility of the initial global model, so
/// that `Σ total = final_utility − initial_utility` can be checked directly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValuationReport {
    pub per_round: Vec<ValueVector>,
    pub total: ValueVector,
    pub per_round_utility_delta: Vec<f64>,
    pub round_value_norms: Vec<f64>,
    pub initial_utility: f64,
    pub final_utility: f64,
}

impl ValuationReport {
    /// Assembles a report. `utilities[t]` is the utility after round `t`
    /// and `initial_utility` the one before round 0.
    pub fn from_rounds(
        per_round: Vec<ValueVector>,
        initial_utility: f64,
        utilities: &[f64],
        universe: impl IntoIterator<Item = ParticipantId>,
    ) -> Self {
        let mut total = aggregate_rounds(&per_round);
        total.cover(universe);
        let mut prev = initial_utility;
        let per_round_utility_delta = utilities
            .iter()
            .map(|&u| {
                let d = u - prev;
                prev = u;
                d
            })
            .collect();
        let round_value_norms = per_round.iter().map(ValueVector::l2_norm).collect();
        ValuationReport {
            per_round,
            total,
            per_round_utility_delta,
            round_value_norms,
            initial_utility,
            final_utility: utilities.last().copied().unwrap_or(initial_utility),
        }
    }

    /// The same report with every round L2-normalized before aggregation.
    pub fn normalized(&self) -> Self {
        let per_round: Vec<ValueVector> = self.per_round.iter().map(normalize_round_values).collect();
        let mut total = aggregate_rounds(&per_round);
        total.cover(self.total.ids());
        ValuationReport {
            round_value_norms: per_round.iter().map(ValueVector::l2_norm).collect(),
            per_round,
            total,
            per_round_utility_delta: self.per_round_utility_delta.clone(),
            initial_utility: self.initial_utility,
            final_utility: self.final_utility,
        }
    }
}

/// Elementwise sum of per-round values.
pub fn aggregate_rounds(per_round: &[ValueVector]) -> ValueVector {
    let mut total = ValueVector::new(None);
    for round in per_round {
        for (id, v) in round.iter() {
            total.add(id, v);
        }
    }
    total
}

/// Divides a round's values by their L2 norm; the zero vector is returned unchanged.
pub fn normalize_round_values(v: &ValueVector) -> ValueVector {
    let norm = v.l2_norm();
    if norm == 0.0 {
        return v.clone();
    }
    ValueVector::from_pairs(v.round, v.iter().map(|(id, x)| (id, x / norm)))
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    participant: ParticipantId,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Round { round: usize, utility_delta: f64, norm: f64, values: Vec<Entry> },
    Total { initial_utility: f64, final_utility: f64, values: Vec<Entry> },
}

fn entries(v: &ValueVector) -> Vec<Entry> {
    v.iter().map(|(participant, value)| Entry { participant, value }).collect()
}

/// Writes one JSON line per round followed by one total line.
pub fn write_report<W: Write>(report: &ValuationReport, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for (t, round) in report.per_round.iter().enumerate() {
        let rec = Record::Round {
            round: round.round.unwrap_or(t),
            utility_delta: report.per_round_utility_delta.get(t).copied().unwrap_or(0.0),
            norm: report.round_value_norms.get(t).copied().unwrap_or_else(|| round.l2_norm()),
            values: entries(round),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    let total = Record::Total {
        initial_utility: report.initial_utility,
        final_utility: report.final_utility,
        values: entries(&report.total),
    };
    serde_json::to_writer(&mut out, &total)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(input: R) -> Result<ValuationReport> {
    let mut report = ValuationReport::default();
    let mut saw_total = false;
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if saw_total {
            return Err(Error::Snapshot(format!("line {}: record after total", lineno + 1)));
        }
        match serde_json::from_str::<Record>(&line)? {
            Record::Round { round, utility_delta, norm, values } => {
                report
                    .per_round
                    .push(ValueVector::from_pairs(Some(round), values.into_iter().map(|e| (e.participant, e.value))));
                report.per_round_utility_delta.push(utility_delta);
                report.round_value_norms.push(norm);
            }
            Record::Total { initial_utility, final_utility, values } => {
                report.total = ValueVector::from_pairs(None, values.into_iter().map(|e| (e.participant, e.value)));
                report.initial_utility = initial_utility;
                report.final_utility = final_utility;
                saw_total = true;
            }
        }
    }
    if !saw_total {
        return Err(Error::Snapshot("report has no total record".into()));
    }
    Ok(report)
}
