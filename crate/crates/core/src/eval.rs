//! Precision / recall / F1 over argument role predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_role: BTreeMap<String, RoleCounts>,
    pub n_instances: usize,
}

/// `(P, R, F)` from raw counts; zero denominators give zero.
pub fn prf(correct: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(correct, predicted);
    let r = ratio(correct, gold);
    let f = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f)
}

impl EvalReport {
    pub fn totals(&self) -> RoleCounts {
        self.per_role
            .values()
            .fold(RoleCounts::default(), |acc, c| RoleCounts {
                correct: acc.correct + c.correct,
                predicted: acc.predicted + c.predicted,
                gold: acc.gold + c.gold,
            })
    }
}

/// Scores predictions against gold labels keyed by instance id. `None` is the
/// NONE label on either side.
pub fn evaluate_prf(
    predictions: &BTreeMap<String, Option<String>>,
    gold: &BTreeMap<String, Option<String>>,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::KeyMismatch(format!(
            "{} predictions for {} gold instances",
            predictions.len(),
            gold.len()
        )));
    }
    let mut per_role: BTreeMap<String, RoleCounts> = BTreeMap::new();
    for (id, g) in gold {
        let p = predictions
            .get(id)
            .ok_or_else(|| Error::KeyMismatch(format!("no prediction for `{id}`")))?;
        if let Some(role) = p {
            per_role.entry(role.clone()).or_default().predicted += 1;
        }
        if let Some(role) = g {
            per_role.entry(role.clone()).or_default().gold += 1;
        }
        if let (Some(pr), Some(gr)) = (p, g) {
            if pr == gr {
                per_role.entry(gr.clone()).or_default().correct += 1;
            }
        }
    }
    let mut report = EvalReport {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        per_role,
        n_instances: gold.len(),
    };
    let t = report.totals();
    (report.precision, report.recall, report.f1) = prf(t.correct, t.predicted, t.gold);
    Ok(report)
}
