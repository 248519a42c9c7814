//! Tab-separated result tables. Floats use the shortest round-trip form, so
//! identical runs give byte-identical files.

use std::path::{Path, PathBuf};

use super::{DetectionOutcome, SummarizationResult};
use crate::error::Result;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().delimiter(b'\t').from_path(path)?)
}

/// Writes `curves.tsv`, `auc.tsv` and `values.tsv`; returns the paths.
pub fn write_detection_tables(dir: &Path, outcome: &DetectionOutcome) -> Result<Vec<PathBuf>> {
    let curves = dir.join("curves.tsv");
    let mut w = writer(&curves)?;
    w.write_record(["method", "inspected", "detected"])?;
    for mc in &outcome.curves {
        for (x, y) in mc.curve.inspected.iter().zip(&mc.curve.detected) {
            w.write_record([mc.method.as_str(), &x.to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;

    let auc = dir.join("auc.tsv");
    let mut w = writer(&auc)?;
    w.write_record(["method", "auc"])?;
    for mc in &outcome.curves {
        w.write_record([mc.method.as_str(), &mc.curve.auc.to_string()])?;
    }
    if let Some(asr) = outcome.attack_success_rate {
        w.write_record(["attack-success-rate", &asr.to_string()])?;
    }
    w.write_record(["test-accuracy", &outcome.test_accuracy.to_string()])?;
    w.flush()?;

    let values = dir.join("values.tsv");
    let mut w = writer(&values)?;
    w.write_record(["participant", "bad", "fed-sv", "fed-sv-normalized", "fed-loo", "fed-loo-normalized"])?;
    let sv_norm = outcome.sv_report.normalized();
    let loo_norm = outcome.loo_report.normalized();
    for id in outcome.sv_report.total.ids() {
        w.write_record([
            id.to_string(),
            u8::from(outcome.bad.contains(&id.0)).to_string(),
            outcome.sv_report.total.get(id).to_string(),
            sv_norm.total.get(id).to_string(),
            outcome.loo_report.total.get(id).to_string(),
            loo_norm.total.get(id).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![curves, auc, values])
}

pub fn write_summarization_table(path: &Path, result: &SummarizationResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "q", "test_accuracy"])?;
    w.write_record(["unfiltered", "0", &result.baseline_accuracy.to_string()])?;
    for (method, row) in result.methods.iter().zip(&result.accuracy) {
        for (q, acc) in result.fractions.iter().zip(row) {
            w.write_record([method.as_str(), &q.to_string(), &acc.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_norms_table(path: &Path, norms: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["round", "norm"])?;
    for (t, n) in norms.iter().enumerate() {
        w.write_record([t.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
