//! Leave-classes-out simulation of ID/OOD data.
//!
//! For every candidate `M` and variant `i`, `M` classes are drawn uniformly
//! without replacement and held out. A variant classifier is trained on the
//! remaining classes' training rows, and `S` balanced tuning pairs are drawn:
//! the ID side from the held-in classes' validation rows, the OOD side from
//! all rows (training and validation) of the held-out classes, which the
//! variant never saw.
//!
//! Seeds: `split = derive(master, [SPLIT, M, i])`; class choice, training and
//! fit pair `j` use `derive(split, [CLASS_CHOICE])`,
//! `derive(split, [TRAIN, train_seed])` and `derive(split, [FIT_PAIRS, j])`.
//! Resampled pairs use `derive(resample_seed, [REVALIDATE_PAIRS, M, i, j])`.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{partition_by_class, read_interchange, write_interchange, LabeledDataset};
use crate::error::{Error, Result};
use crate::net::{load_net, save_net, train, TaskNet, TrainConfig};
use crate::seed::{self, stream};

pub const DEFAULT_PAIR_SIZE: usize = 500;
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.1;
pub const DEFAULT_MIN_TRAIN_ACCURACY: f64 = 0.9;

fn default_pair_size() -> usize {
    DEFAULT_PAIR_SIZE
}

fn default_holdout() -> f64 {
    DEFAULT_HOLDOUT_FRACTION
}

fn default_min_accuracy() -> Option<f64> {
    Some(DEFAULT_MIN_TRAIN_ACCURACY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Candidate numbers of held-out classes.
    pub m_grid: Vec<usize>,
    /// Variants per `M`.
    pub n_variants: usize,
    /// Tuning pairs per variant.
    pub s_pairs: usize,
    /// Samples per side of a tuning pair (clamped to the pools).
    #[serde(default = "default_pair_size")]
    pub tune_pair_size: usize,
    /// Fraction of each class moved to the validation portion.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    /// Minimum training accuracy of each variant; `None` disables the gate.
    #[serde(default = "default_min_accuracy")]
    pub min_train_accuracy: Option<f64>,
    /// Master seed of every derived stream.
    #[serde(default)]
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(m_grid: Vec<usize>, n_variants: usize, s_pairs: usize, seed: u64) -> Self {
        SimulationConfig {
            m_grid,
            n_variants,
            s_pairs,
            tune_pair_size: DEFAULT_PAIR_SIZE,
            holdout_fraction: DEFAULT_HOLDOUT_FRACTION,
            min_train_accuracy: Some(DEFAULT_MIN_TRAIN_ACCURACY),
            seed,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.m_grid.is_empty() {
            return Err(Error::Invalid("m_grid is empty".into()));
        }
        if let Some(&m) = self.m_grid.iter().find(|&&m| m == 0 || m >= n_classes) {
            return Err(Error::Invalid(format!(
                "M = {m} must satisfy 1 <= M < {n_classes} (number of classes)"
            )));
        }
        let mut ms = self.m_grid.clone();
        ms.sort_unstable();
        ms.dedup();
        if ms.len() != self.m_grid.len() {
            return Err(Error::Invalid("m_grid contains duplicates".into()));
        }
        if self.n_variants == 0 || self.s_pairs == 0 || self.tune_pair_size == 0 {
            return Err(Error::Invalid(
                "n_variants, s_pairs and tune_pair_size must be positive".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Invalid("holdout_fraction must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// A corpus divided into training and validation portions.
#[derive(Debug, Clone, PartialEq)]
pub struct Holdout {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
}

/// Seeded per-class split: `ceil(fraction·n_c)` rows of each class go to
/// validation, at least one row stays in training.
pub fn holdout_split(corpus: &LabeledDataset, fraction: f64, seed: u64) -> Result<Holdout> {
    let mut rng = seed::rng(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (class, mut rows) in corpus.indices_by_class() {
        if rows.len() < 2 {
            return Err(Error::InsufficientSamples {
                class,
                detail: format!(
                    "{} row(s); need 2 to form training and validation",
                    rows.len()
                ),
            });
        }
        rows.shuffle(&mut rng);
        let n_val = ((fraction * rows.len() as f64).ceil() as usize).clamp(1, rows.len() - 1);
        val_idx.extend_from_slice(&rows[..n_val]);
        train_idx.extend_from_slice(&rows[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let keep_classes = |d: LabeledDataset| {
        LabeledDataset::with_classes(
            d.inputs().clone(),
            d.labels().to_vec(),
            corpus.class_ids().to_vec(),
        )
        .map(|x| x.tagged(corpus.source_tag()))
    };
    Ok(Holdout {
        train: keep_classes(corpus.select(&train_idx))?,
        validation: keep_classes(corpus.select(&val_idx))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrigin {
    /// Drawn with the split, used to fit detector parameters.
    Fit,
    /// Redrawn afterwards from an independent seed root.
    Resample { root: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub origin: PairOrigin,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunePair {
    pub id: LabeledDataset,
    pub ood: LabeledDataset,
    pub lineage: Lineage,
}

#[derive(Debug, Clone)]
pub struct SimulatedSplit {
    pub m: usize,
    pub variant_index: usize,
    pub seed: u64,
    pub ood_classes: Vec<i32>,
    /// Training rows of the held-in classes.
    pub id_train: LabeledDataset,
    /// Validation rows of the held-in classes; ID side of tuning pairs.
    pub id_holdout: LabeledDataset,
    /// All rows of the held-out classes.
    pub ood_pool: LabeledDataset,
    pub net: TaskNet,
    pub train_accuracy: f64,
    pub tune_pairs: Vec<TunePair>,
    pub pair_size: usize,
}

/// Draws `min(size, |id_pool|, |ood_pool|)` rows from each pool, uniformly
/// without replacement.
pub fn balance_pair(
    id_pool: &LabeledDataset,
    ood_pool: &LabeledDataset,
    size: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if size == 0 {
        return Err(Error::Invalid("tuning pair size must be positive".into()));
    }
    if id_pool.is_empty() || ood_pool.is_empty() {
        return Err(Error::Invalid(format!(
            "cannot draw a tuning pair from an empty pool (id {}, ood {})",
            id_pool.len(),
            ood_pool.len()
        )));
    }
    let n = size.min(id_pool.len()).min(ood_pool.len());
    let mut rng = seed::rng(seed);
    let mut id_idx = sample(&mut rng, id_pool.len(), n).into_vec();
    let mut ood_idx = sample(&mut rng, ood_pool.len(), n).into_vec();
    id_idx.sort_unstable();
    ood_idx.sort_unstable();
    Ok((id_pool.select(&id_idx), ood_pool.select(&ood_idx)))
}

fn draw_pairs(
    split_key: (usize, usize),
    id_pool: &LabeledDataset,
    ood_pool: &LabeledDataset,
    size: usize,
    count: usize,
    seed_of: impl Fn(usize) -> u64,
    origin: PairOrigin,
) -> Result<Vec<TunePair>> {
    (0..count)
        .map(|j| {
            let s = seed_of(j);
            let (id, ood) = balance_pair(id_pool, ood_pool, size, s).map_err(|e| match e {
                Error::Invalid(msg) => Error::Invalid(format!(
                    "split (M={}, i={}), pair {j}: {msg}",
                    split_key.0, split_key.1
                )),
                other => other,
            })?;
            Ok(TunePair {
                id,
                ood,
                lineage: Lineage { origin, seed: s },
            })
        })
        .collect()
}

fn build_split(
    holdout: &Holdout,
    m: usize,
    i: usize,
    cfg: &SimulationConfig,
    train_cfg: &TrainConfig,
) -> Result<SimulatedSplit> {
    let split_seed = seed::derive(cfg.seed, &[stream::SPLIT, m as u64, i as u64]);
    let classes = holdout.train.class_ids();
    let mut rng = seed::rng(seed::derive(split_seed, &[stream::CLASS_CHOICE]));
    let mut ood_classes: Vec<i32> = sample(&mut rng, classes.len(), m)
        .into_iter()
        .map(|k| classes[k])
        .collect();
    ood_classes.sort_unstable();

    let (ood_train, id_train) = partition_by_class(&holdout.train, &ood_classes)?;
    let (ood_val, id_holdout) = partition_by_class(&holdout.validation, &ood_classes)?;
    let ood_pool = LabeledDataset::concat(&[&ood_train, &ood_val])?;

    let net_seed = seed::derive(split_seed, &[stream::TRAIN, train_cfg.seed]);
    let net = train(&id_train, &train_cfg.with_seed(net_seed))?;
    let train_accuracy = net.accuracy(&id_train)?;
    if let Some(required) = cfg.min_train_accuracy {
        if train_accuracy < required {
            return Err(Error::SanityGate {
                m,
                variant: i,
                accuracy: train_accuracy,
                required,
            });
        }
    }
    let tune_pairs = draw_pairs(
        (m, i),
        &id_holdout,
        &ood_pool,
        cfg.tune_pair_size,
        cfg.s_pairs,
        |j| seed::derive(split_seed, &[stream::FIT_PAIRS, j as u64]),
        PairOrigin::Fit,
    )?;
    Ok(SimulatedSplit {
        m,
        variant_index: i,
        seed: split_seed,
        ood_classes,
        id_train,
        id_holdout,
        ood_pool,
        net,
        train_accuracy,
        tune_pairs,
        pair_size: cfg.tune_pair_size,
    })
}

/// All `|m_grid|·N` splits, ordered by `M` (as listed) then variant index.
/// Variants are built in parallel; the result does not depend on scheduling.
pub fn generate_splits(
    corpus: &LabeledDataset,
    cfg: &SimulationConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<SimulatedSplit>> {
    cfg.validate(corpus.class_ids().len())?;
    train_cfg.validate()?;
    let holdout = holdout_split(
        corpus,
        cfg.holdout_fraction,
        seed::derive(cfg.seed, &[stream::HOLDOUT]),
    )?;
    let keys: Vec<(usize, usize)> = cfg
        .m_grid
        .iter()
        .flat_map(|&m| (0..cfg.n_variants).map(move |i| (m, i)))
        .collect();
    keys.par_iter()
        .map(|&(m, i)| build_split(&holdout, m, i, cfg, train_cfg))
        .collect()
}

/// Fresh tuning pairs for `split` drawn from an independent seed root.
pub fn resample_pairs(split: &SimulatedSplit, root: u64) -> Result<Vec<TunePair>> {
    let (m, i) = (split.m as u64, split.variant_index as u64);
    draw_pairs(
        (split.m, split.variant_index),
        &split.id_holdout,
        &split.ood_pool,
        split.pair_size,
        split.tune_pairs.len(),
        |j| seed::derive(root, &[stream::REVALIDATE_PAIRS, m, i, j as u64]),
        PairOrigin::Resample { root },
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    id_file: String,
    ood_file: String,
    lineage: Lineage,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitEntry {
    m: usize,
    variant_index: usize,
    seed: u64,
    ood_classes: Vec<i32>,
    train_accuracy: f64,
    pair_size: usize,
    id_train_file: String,
    id_holdout_file: String,
    ood_pool_file: String,
    net_file: String,
    pairs: Vec<PairEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitManifest {
    simulation: SimulationConfig,
    train: TrainConfig,
    splits: Vec<SplitEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every split as interchange files plus `manifest.json` into `dir`.
pub fn save_splits(
    dir: &Path,
    splits: &[SimulatedSplit],
    cfg: &SimulationConfig,
    train_cfg: &TrainConfig,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(splits.len());
    for s in splits {
        let stem = format!("m{}_v{}", s.m, s.variant_index);
        let put = |name: String, d: &LabeledDataset| -> Result<String> {
            write_interchange(&dir.join(&name), &d.clone().into())?;
            Ok(name)
        };
        let net_file = format!("{stem}_net.json");
        save_net(&s.net, &dir.join(&net_file))?;
        let pairs = s
            .tune_pairs
            .iter()
            .enumerate()
            .map(|(j, p)| {
                Ok(PairEntry {
                    id_file: put(format!("{stem}_pair{j}_id.oodf"), &p.id)?,
                    ood_file: put(format!("{stem}_pair{j}_ood.oodf"), &p.ood)?,
                    lineage: p.lineage,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(SplitEntry {
            m: s.m,
            variant_index: s.variant_index,
            seed: s.seed,
            ood_classes: s.ood_classes.clone(),
            train_accuracy: s.train_accuracy,
            pair_size: s.pair_size,
            id_train_file: put(format!("{stem}_id_train.oodf"), &s.id_train)?,
            id_holdout_file: put(format!("{stem}_id_holdout.oodf"), &s.id_holdout)?,
            ood_pool_file: put(format!("{stem}_ood_pool.oodf"), &s.ood_pool)?,
            net_file,
            pairs,
        });
    }
    let manifest = SplitManifest {
        simulation: cfg.clone(),
        train: train_cfg.clone(),
        splits: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

/// Reloads splits written by [`save_splits`] without retraining.
pub fn load_splits(dir: &Path) -> Result<(Vec<SimulatedSplit>, SimulationConfig, TrainConfig)> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SplitManifest = serde_json::from_slice(&bytes)?;
    let get = |name: &str| read_interchange(&dir.join(name))?.into_dataset();
    let splits = manifest
        .splits
        .into_iter()
        .map(|e| {
            let tune_pairs = e
                .pairs
                .iter()
                .map(|p| {
                    Ok(TunePair {
                        id: get(&p.id_file)?,
                        ood: get(&p.ood_file)?,
                        lineage: p.lineage,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SimulatedSplit {
                m: e.m,
                variant_index: e.variant_index,
                seed: e.seed,
                ood_classes: e.ood_classes,
                id_train: get(&e.id_train_file)?,
                id_holdout: get(&e.id_holdout_file)?,
                ood_pool: get(&e.ood_pool_file)?,
                net: load_net(&dir.join(&e.net_file))?,
                train_accuracy: e.train_accuracy,
                tune_pairs,
                pair_size: e.pair_size,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((splits, manifest.simulation, manifest.train))
}
