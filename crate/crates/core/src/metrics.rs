//! Detection metrics over ID/OOD score pairs. Scores are "higher = more ID";
//! ID samples are the positive class.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::detectors::{score, Detector, DetectorContext};
use crate::error::{Error, Result};
use crate::net::TaskNet;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
}

impl ScoredPair {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Self {
        ScoredPair {
            id_scores,
            ood_scores,
        }
    }

    pub fn auroc(&self) -> Result<f64> {
        auroc(&self.id_scores, &self.ood_scores)
    }

    pub fn fpr_at_tpr(&self, tpr_target: f64) -> Result<f64> {
        fpr_at_tpr(&self.id_scores, &self.ood_scores, tpr_target)
    }
}

fn check(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Invalid(format!(
            "metric needs both sides non-empty (id {}, ood {})",
            id.len(),
            ood.len()
        )));
    }
    if id.iter().chain(ood).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite score".into()));
    }
    Ok(())
}

/// `P(id > ood) + ½·P(id = ood)` via midranks (Mann-Whitney U).
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_id = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let ids = all[i..j].iter().filter(|e| e.1).count();
        rank_sum_id += midrank * ids as f64;
        i = j;
    }
    let (n1, n2) = (id.len() as f64, ood.len() as f64);
    Ok((rank_sum_id - n1 * (n1 + 1.0) / 2.0) / (n1 * n2))
}

/// Fraction of OOD scores `>= t*`, where `t*` is the largest threshold at
/// which the fraction of ID scores `>= t*` reaches `tpr_target`.
pub fn fpr_at_tpr(id: &[f64], ood: &[f64], tpr_target: f64) -> Result<f64> {
    check(id, ood)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::Invalid(format!(
            "tpr target {tpr_target} outside (0,1]"
        )));
    }
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // TPR only changes at ID scores; walk down until the target is met.
    // Counting `>= t` (not position) keeps ties consistent.
    let mut threshold = sorted[n - 1];
    let mut k = 0;
    while k < n {
        let t = sorted[k];
        while k < n && sorted[k] == t {
            k += 1;
        }
        if k as f64 / n as f64 >= tpr_target {
            threshold = t;
            break;
        }
    }
    let fp = ood.iter().filter(|&&s| s >= threshold).count();
    Ok(fp as f64 / ood.len() as f64)
}

/// Tuning objective; larger is better for every kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[default]
    Auroc,
    /// `1 − FPR95`.
    OneMinusFpr95,
}

impl ObjectiveKind {
    pub fn evaluate(self, pair: &ScoredPair) -> Result<f64> {
        match self {
            ObjectiveKind::Auroc => pair.auroc(),
            ObjectiveKind::OneMinusFpr95 => Ok(1.0 - pair.fpr_at_tpr(0.95)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub value: f64,
}

/// Scores both tuning sets with `detector` on top of `net` and evaluates the
/// objective.
pub fn objective(
    detector: &Detector,
    net: &TaskNet,
    ctx: &DetectorContext,
    id_tune: &LabeledDataset,
    ood_tune: &LabeledDataset,
    kind: ObjectiveKind,
) -> Result<Objective> {
    if id_tune.is_empty() || ood_tune.is_empty() {
        return Err(Error::Invalid(
            "objective needs non-empty tuning sets".into(),
        ));
    }
    let id_scores = score(detector, &net.penultimate(id_tune.inputs())?, ctx)?;
    let ood_scores = score(detector, &net.penultimate(ood_tune.inputs())?, ctx)?;
    let value = kind.evaluate(&ScoredPair::new(id_scores, ood_scores))?;
    Ok(Objective { kind, value })
}
