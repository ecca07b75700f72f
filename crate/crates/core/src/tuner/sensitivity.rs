//! How much a tuned detector's test performance depends on the OOD data it
//! was tuned with.

use serde::{Deserialize, Serialize};

use super::DeployedModel;
use crate::bayesopt::{maximize, BoConfig};
use crate::data::LabeledDataset;
use crate::detectors::{Detector, Family};
use crate::error::{Error, Result};
use crate::evaluation::PreparedNet;
use crate::metrics::ObjectiveKind;
use crate::simulation::{Lineage, PairOrigin, TunePair};

#[derive(Debug, Clone)]
pub struct TuningSet {
    pub name: String,
    pub id: LabeledDataset,
    pub ood: LabeledDataset,
}

/// Produces detector parameters for a model from one tuning set.
pub trait TuningProcedure: Sync {
    fn name(&self) -> String;
    fn tune(&self, model: &DeployedModel, set: &TuningSet) -> Result<Detector>;
}

/// Bayesian optimization of the objective on the single tuning pair.
#[derive(Debug, Clone)]
pub struct BoProcedure {
    pub family: Family,
    pub bo: BoConfig,
    pub objective: ObjectiveKind,
}

impl TuningProcedure for BoProcedure {
    fn name(&self) -> String {
        self.family.name().to_string()
    }

    fn tune(&self, model: &DeployedModel, set: &TuningSet) -> Result<Detector> {
        let pair = TunePair {
            id: set.id.clone(),
            ood: set.ood.clone(),
            lineage: Lineage {
                origin: PairOrigin::Fit,
                seed: self.bo.seed,
            },
        };
        let prepared = PreparedNet::with_context(model.ctx.clone(), &model.net, &[pair])?;
        let space = self.family.space(&model.ctx.bounds())?;
        let trace = maximize(
            |x| prepared.mean_value(&self.family.detector_at(x)?, self.objective),
            &space,
            &self.bo,
        )?;
        self.family.detector_at(&trace.best_point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub detector: String,
    pub test_set: String,
    pub tuning_set: String,
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub detector: String,
    pub test_set: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub cells: Vec<SensitivityCell>,
    /// One row per (detector, test set), in input order.
    pub summary: Vec<SensitivitySummary>,
}

/// Population standard deviation (divides by the count).
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Tunes every procedure on every tuning set, then reports FPR95 on each
/// test set with the mean and spread across tuning sets.
pub fn sensitivity(
    procedures: &[&dyn TuningProcedure],
    tuning_sets: &[TuningSet],
    model: &DeployedModel,
    id_test: &LabeledDataset,
    test_sets: &[(String, LabeledDataset)],
) -> Result<SensitivityReport> {
    if tuning_sets.len() < 2 {
        return Err(Error::Invalid(
            "sensitivity needs at least two tuning sets".into(),
        ));
    }
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    for proc in procedures {
        let tuned = tuning_sets
            .iter()
            .map(|t| proc.tune(model, t))
            .collect::<Result<Vec<_>>>()?;
        for (test_name, ood) in test_sets {
            let mut values = Vec::with_capacity(tuned.len());
            for (det, t) in tuned.iter().zip(tuning_sets) {
                let fpr95 = model.evaluate(det, id_test, ood)?.fpr95;
                values.push(fpr95);
                cells.push(SensitivityCell {
                    detector: proc.name(),
                    test_set: test_name.clone(),
                    tuning_set: t.name.clone(),
                    fpr95,
                });
            }
            summary.push(SensitivitySummary {
                detector: proc.name(),
                test_set: test_name.clone(),
                mean: values.iter().sum::<f64>() / values.len() as f64,
                std: population_std(&values),
            });
        }
    }
    Ok(SensitivityReport { cells, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_convention() {
        assert!((population_std(&[0.2, 0.4]) - 0.1).abs() < 1e-15);
        assert_eq!(population_std(&[0.3, 0.3, 0.3]), 0.0);
    }
}
