//! Detector tuning on simulated splits.
//!
//! For each candidate `M` the detector parameters maximize the objective
//! averaged over that `M`'s variant networks and tuning pairs. Each optimum
//! is then rescored on freshly drawn pairs and the `M` with the best
//! rescored value wins (ties go to the smaller `M`). The winning parameters
//! are meant to be used with a network trained on every class.

mod ablation;
mod sensitivity;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablation::{ablate_m, AblationRow, AblationTable};
pub use sensitivity::{
    population_std, sensitivity, BoProcedure, SensitivityCell, SensitivityReport,
    SensitivitySummary, TuningProcedure, TuningSet,
};

use crate::bayesopt::{maximize, BoConfig, BoTrace, ParamSpace};
use crate::data::LabeledDataset;
use crate::detectors::{Detector, DetectorContext, Family, SpaceBounds};
use crate::error::{Error, Result};
use crate::evaluation::{nested_mean, PreparedNet};
use crate::metrics::{auroc, fpr_at_tpr, ObjectiveKind};
use crate::net::{train, TaskNet, TrainConfig};
use crate::seed::{self, stream};
use crate::simulation::{
    generate_splits, holdout_split, resample_pairs, Holdout, SimulatedSplit, SimulationConfig,
    TunePair,
};

/// Prepares one split for scoring: the context comes from the variant's
/// features on its own training rows.
pub fn prepare_split(split: &SimulatedSplit, pairs: &[TunePair]) -> Result<PreparedNet> {
    PreparedNet::new(
        &split.net,
        &split.id_train,
        pairs,
        seed::derive(split.seed, &[stream::KNN_SUBSAMPLE]),
    )
}

pub fn prepare_splits(splits: &[&SimulatedSplit]) -> Result<Vec<PreparedNet>> {
    splits
        .par_iter()
        .map(|s| prepare_split(s, &s.tune_pairs))
        .collect()
}

/// Mean over variants of the mean objective over each variant's pairs.
pub fn simulated_loss(
    detector: &Detector,
    nets: &[PreparedNet],
    kind: ObjectiveKind,
) -> Result<f64> {
    nested_mean(nets, detector, kind)
}

/// Search box shared by all variants: ReAct's interval is the union of
/// their activation ranges.
pub fn search_space(family: Family, nets: &[PreparedNet]) -> Result<ParamSpace> {
    let bounds = SpaceBounds::union(nets.iter().map(|n| n.ctx().bounds()))
        .ok_or_else(|| Error::Invalid("no variant networks".into()))?;
    family.space(&bounds)
}

pub fn optimize_phi(
    family: Family,
    nets: &[PreparedNet],
    bo_cfg: &BoConfig,
    kind: ObjectiveKind,
) -> Result<(Detector, BoTrace)> {
    let space = search_space(family, nets)?;
    let trace = maximize(
        |x| simulated_loss(&family.detector_at(x)?, nets, kind),
        &space,
        bo_cfg,
    )?;
    Ok((family.detector_at(&trace.best_point)?, trace))
}

/// Optimum found for one `M` before rescoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitAtM {
    pub m: usize,
    pub phi_star: Detector,
    pub fit_value: f64,
    pub trace: BoTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MResult {
    pub phi_star: Detector,
    pub fit_value: f64,
    pub revalidated_value: f64,
    /// Seed root of the rescoring pairs.
    pub revalidation_root: u64,
    pub trace: BoTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub family: Family,
    pub objective: ObjectiveKind,
    pub master_seed: u64,
    pub per_m: BTreeMap<usize, MResult>,
    pub m_star: usize,
    pub final_detector: Detector,
}

impl TuneResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `M` with the highest value; ties go to the smaller `M`.
pub fn choose_m(values: &[(usize, f64)]) -> Option<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by_key(|&(m, _)| m);
    sorted
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (m, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((m, v)),
        })
        .map(|(m, _)| m)
}

fn splits_at(splits: &[SimulatedSplit], m: usize) -> Vec<&SimulatedSplit> {
    splits.iter().filter(|s| s.m == m).collect()
}

/// Rescores each `M`'s optimum on pairs redrawn from `root` and picks `M*`.
pub fn select_m(
    fits: Vec<FitAtM>,
    splits: &[SimulatedSplit],
    root: u64,
    family: Family,
    kind: ObjectiveKind,
    master_seed: u64,
) -> Result<TuneResult> {
    if fits.is_empty() {
        return Err(Error::Invalid("no per-M results to select from".into()));
    }
    let mut per_m = BTreeMap::new();
    for fit in fits {
        let at_m = splits_at(splits, fit.m);
        if at_m.is_empty() {
            return Err(Error::Invalid(format!("no splits for M = {}", fit.m)));
        }
        let nets = at_m
            .par_iter()
            .map(|s| prepare_split(s, &resample_pairs(s, root)?))
            .collect::<Result<Vec<_>>>()?;
        let revalidated_value = simulated_loss(&fit.phi_star, &nets, kind)?;
        per_m.insert(
            fit.m,
            MResult {
                phi_star: fit.phi_star,
                fit_value: fit.fit_value,
                revalidated_value,
                revalidation_root: root,
                trace: fit.trace,
            },
        );
    }
    let values: Vec<(usize, f64)> = per_m
        .iter()
        .map(|(&m, r)| (m, r.revalidated_value))
        .collect();
    let m_star = choose_m(&values).expect("non-empty");
    Ok(TuneResult {
        family,
        objective: kind,
        master_seed,
        final_detector: per_m[&m_star].phi_star,
        per_m,
        m_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub family: Family,
    #[serde(default)]
    pub objective: ObjectiveKind,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bo: BoConfig,
}

pub const PARTIAL_PREFIX: &str = "partial_m";

/// Generates splits, optimizes each `M` and selects `M*`. With a
/// `checkpoint_dir`, every finished `M` is written there as
/// `partial_m<M>.json` before selection.
pub fn tune(
    corpus: &LabeledDataset,
    cfg: &TuneConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TuneResult> {
    let splits = generate_splits(corpus, &cfg.simulation, &cfg.train)?;
    tune_on_splits(&splits, cfg, checkpoint_dir)
}

pub fn tune_on_splits(
    splits: &[SimulatedSplit],
    cfg: &TuneConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TuneResult> {
    let master = cfg.simulation.seed;
    let mut ms = cfg.simulation.m_grid.clone();
    ms.sort_unstable();
    ms.dedup();
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fits = ms
        .par_iter()
        .map(|&m| {
            let nets = prepare_splits(&splits_at(splits, m))?;
            let bo = cfg.bo.with_seed(seed::derive(
                master,
                &[stream::BAYESOPT, cfg.bo.seed, m as u64],
            ));
            let (phi_star, trace) = optimize_phi(cfg.family, &nets, &bo, cfg.objective)?;
            let fit = FitAtM {
                m,
                phi_star,
                fit_value: trace.best_value,
                trace,
            };
            if let Some(dir) = checkpoint_dir {
                let path = dir.join(format!("{PARTIAL_PREFIX}{m}.json"));
                fs::write(&path, serde_json::to_vec_pretty(&fit)?)
                    .map_err(|e| Error::io(&path, e))?;
            }
            Ok(fit)
        })
        .collect::<Vec<Result<FitAtM>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let root = seed::derive(master, &[stream::REVALIDATE_PAIRS]);
    select_m(fits, splits, root, cfg.family, cfg.objective, master)
}

/// The network trained on every corpus class, with its detector context.
#[derive(Debug)]
pub struct DeployedModel {
    pub net: TaskNet,
    pub ctx: DetectorContext,
    /// Training and validation portions the net was trained and checked on.
    pub holdout: Holdout,
}

/// Trains the full network on the same training portion the simulation
/// uses.
pub fn deploy(
    corpus: &LabeledDataset,
    sim: &SimulationConfig,
    train_cfg: &TrainConfig,
) -> Result<DeployedModel> {
    let holdout = holdout_split(
        corpus,
        sim.holdout_fraction,
        seed::derive(sim.seed, &[stream::HOLDOUT]),
    )?;
    let net_seed = seed::derive(sim.seed, &[stream::FULL_NET, train_cfg.seed]);
    let net = train(&holdout.train, &train_cfg.with_seed(net_seed))?;
    DeployedModel::new(
        net,
        holdout,
        seed::derive(sim.seed, &[stream::FULL_NET, stream::KNN_SUBSAMPLE]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub auroc: f64,
    pub fpr95: f64,
}

impl DeployedModel {
    pub fn new(net: TaskNet, holdout: Holdout, knn_seed: u64) -> Result<Self> {
        let reference = net.penultimate(holdout.train.inputs())?;
        let ctx = DetectorContext::new(net.head(), &reference, knn_seed)?;
        Ok(DeployedModel { net, ctx, holdout })
    }

    pub fn scores(&self, detector: &Detector, data: &LabeledDataset) -> Result<Vec<f64>> {
        crate::detectors::score(detector, &self.net.penultimate(data.inputs())?, &self.ctx)
    }

    pub fn evaluate(
        &self,
        detector: &Detector,
        id: &LabeledDataset,
        ood: &LabeledDataset,
    ) -> Result<Evaluation> {
        let s_id = self.scores(detector, id)?;
        let s_ood = self.scores(detector, ood)?;
        Ok(Evaluation {
            auroc: auroc(&s_id, &s_ood)?,
            fpr95: fpr_at_tpr(&s_id, &s_ood, 0.95)?,
        })
    }
}
