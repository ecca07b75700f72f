use serde::{Deserialize, Serialize};

use super::{DeployedModel, TuneResult};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub m: usize,
    /// AUROC per evaluation set, in column order.
    pub values: Vec<f64>,
}

/// Rows are the tuned `M` values, columns the evaluation OOD sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub columns: Vec<String>,
    pub rows: Vec<AblationRow>,
}

/// AUROC of each `M`'s optimum on the full network against each OOD set.
pub fn ablate_m(
    result: &TuneResult,
    model: &DeployedModel,
    id_test: &LabeledDataset,
    eval_sets: &[(String, LabeledDataset)],
) -> Result<AblationTable> {
    if result.per_m.is_empty() {
        return Err(Error::Invalid("tuning result has no per-M entries".into()));
    }
    let rows = result
        .per_m
        .iter()
        .map(|(&m, r)| {
            let values = eval_sets
                .iter()
                .map(|(_, ood)| Ok(model.evaluate(&r.phi_star, id_test, ood)?.auroc))
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow { m, values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable {
        columns: eval_sets.iter().map(|(n, _)| n.clone()).collect(),
        rows,
    })
}
