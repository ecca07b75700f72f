//! Tuning pairs prepared for repeated scoring under one network.
//!
//! Penultimate features of every pair are computed once; each detector
//! proposal then only reshapes and rescores them.

use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::detectors::{Detector, DetectorContext, ScoringQuery};
use crate::error::{Error, Result};
use crate::metrics::{ObjectiveKind, ScoredPair};
use crate::net::TaskNet;
use crate::simulation::{Lineage, TunePair};

#[derive(Debug)]
pub struct PreparedPair {
    pub id: ScoringQuery,
    pub ood: ScoringQuery,
    pub lineage: Lineage,
}

impl PreparedPair {
    pub fn new(net: &TaskNet, pair: &TunePair) -> Result<Self> {
        Ok(PreparedPair {
            id: ScoringQuery::new(net.penultimate(pair.id.inputs())?),
            ood: ScoringQuery::new(net.penultimate(pair.ood.inputs())?),
            lineage: pair.lineage,
        })
    }

    pub fn value(
        &self,
        detector: &Detector,
        ctx: &DetectorContext,
        kind: ObjectiveKind,
    ) -> Result<f64> {
        let pair = ScoredPair::new(
            self.id.score(detector, ctx)?,
            self.ood.score(detector, ctx)?,
        );
        kind.evaluate(&pair)
    }
}

/// A network's detector context together with its prepared tuning pairs.
#[derive(Debug)]
pub struct PreparedNet {
    ctx: DetectorContext,
    pairs: Vec<PreparedPair>,
}

impl PreparedNet {
    /// Context built from the net's features on `id_reference`.
    pub fn new(
        net: &TaskNet,
        id_reference: &LabeledDataset,
        pairs: &[TunePair],
        knn_seed: u64,
    ) -> Result<Self> {
        let reference = net.penultimate(id_reference.inputs())?;
        let ctx = DetectorContext::new(net.head(), &reference, knn_seed)?;
        Self::with_context(ctx, net, pairs)
    }

    pub fn with_context(ctx: DetectorContext, net: &TaskNet, pairs: &[TunePair]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Invalid("no tuning pairs".into()));
        }
        let pairs = pairs
            .par_iter()
            .map(|p| PreparedPair::new(net, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedNet { ctx, pairs })
    }

    pub fn ctx(&self) -> &DetectorContext {
        &self.ctx
    }

    pub fn pairs(&self) -> &[PreparedPair] {
        &self.pairs
    }

    /// Objective on each pair, in pair order.
    pub fn pair_values(&self, detector: &Detector, kind: ObjectiveKind) -> Result<Vec<f64>> {
        self.pairs
            .par_iter()
            .map(|p| p.value(detector, &self.ctx, kind))
            .collect()
    }

    /// Mean objective over the pairs.
    pub fn mean_value(&self, detector: &Detector, kind: ObjectiveKind) -> Result<f64> {
        Ok(mean(&self.pair_values(detector, kind)?))
    }
}

/// Left-to-right arithmetic mean; `NaN` for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean over nets of the per-net mean over pairs.
pub fn nested_mean(nets: &[PreparedNet], detector: &Detector, kind: ObjectiveKind) -> Result<f64> {
    if nets.is_empty() {
        return Err(Error::Invalid("no networks to average over".into()));
    }
    let per_net = nets
        .par_iter()
        .map(|n| n.mean_value(detector, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&per_net))
}
