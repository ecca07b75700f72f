//! Gaussian-noise and FGSM baselines: simulated OOD sets generated from a
//! single hyperparameter `h` (noise σ or perturbation ε), and the selection
//! of `h` by refitting detector parameters per grid value and rescoring them
//! on freshly drawn pairs.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayesopt::{maximize, BoConfig, BoTrace};
use crate::data::LabeledDataset;
use crate::detectors::{Detector, DetectorContext, Family};
use crate::error::{Error, Result};
use crate::evaluation::{mean, PreparedNet};
use crate::linalg::Matrix;
use crate::metrics::ObjectiveKind;
use crate::net::{LossKind, TaskNet};
use crate::seed::{self, stream};
use crate::simulation::{balance_pair, Lineage, PairOrigin, TunePair};

/// Label given to generated noise samples.
pub const NOISE_LABEL: i32 = -1;

pub const NOISE_TAG: &str = "gaussian-noise";
pub const FGSM_TAG: &str = "fgsm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianNoiseConfig {
    pub mu: f64,
    pub sigma_grid: Vec<f64>,
    pub pixel_range: (f64, f64),
}

impl Default for GaussianNoiseConfig {
    fn default() -> Self {
        GaussianNoiseConfig {
            mu: 128.0,
            sigma_grid: vec![32.0, 64.0, 128.0],
            pixel_range: (0.0, 255.0),
        }
    }
}

impl GaussianNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.pixel_range;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Invalid("pixel_range must be increasing".into()));
        }
        if !(lo..=hi).contains(&self.mu) {
            return Err(Error::Invalid(format!(
                "mu {} outside pixel_range",
                self.mu
            )));
        }
        if self.sigma_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Invalid("noise sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Valid range of the model inputs, used to clip adversarial examples and to
/// place noise samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputRange {
    /// Same interval for every coordinate.
    Uniform { lo: f64, hi: f64 },
    /// Per-coordinate intervals.
    PerCoordinate(Vec<(f64, f64)>),
}

impl InputRange {
    /// Per-coordinate `[min, max]` of `data`.
    pub fn observed(data: &LabeledDataset) -> Result<InputRange> {
        if data.is_empty() {
            return Err(Error::Invalid(
                "cannot infer an input range from no rows".into(),
            ));
        }
        let mut r = vec![(f64::INFINITY, f64::NEG_INFINITY); data.dim()];
        for row in data.inputs().row_iter() {
            for (b, &v) in r.iter_mut().zip(row) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Ok(InputRange::PerCoordinate(r))
    }

    pub fn bounds(&self, dim: usize) -> Result<Vec<(f64, f64)>> {
        let b = match self {
            InputRange::Uniform { lo, hi } => vec![(*lo, *hi); dim],
            InputRange::PerCoordinate(r) if r.len() == dim => r.clone(),
            InputRange::PerCoordinate(r) => {
                return Err(Error::Shape(format!(
                    "input range has {} coordinates, data {dim}",
                    r.len()
                )))
            }
        };
        if b.iter()
            .any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo > hi)
        {
            return Err(Error::Invalid(
                "input range bounds must satisfy lo <= hi".into(),
            ));
        }
        Ok(b)
    }
}

/// `count` noise samples: each coordinate is drawn from `N(mu, sigma)` in
/// pixel units, clipped to `pixel_range`, then mapped affinely onto that
/// coordinate's input interval.
pub fn gen_gaussian_noise(
    cfg: &GaussianNoiseConfig,
    sigma: f64,
    range: &[(f64, f64)],
    count: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    if range.is_empty() {
        return Err(Error::Shape("noise needs at least one coordinate".into()));
    }
    let normal = Normal::new(cfg.mu, sigma)
        .map_err(|e| Error::Invalid(format!("noise sigma {sigma}: {e}")))?;
    let (plo, phi) = cfg.pixel_range;
    let mut rng = seed::rng(seed);
    let mut data = Vec::with_capacity(count * range.len());
    for _ in 0..count {
        for &(lo, hi) in range {
            let v = normal.sample(&mut rng).clamp(plo, phi);
            data.push(lo + (v - plo) / (phi - plo) * (hi - lo));
        }
    }
    LabeledDataset::new(
        Matrix::from_vec(count, range.len(), data)?,
        vec![NOISE_LABEL; count],
    )
    .map(|d| d.tagged(NOISE_TAG))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgsmConfig {
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub loss_kind: LossKind,
    /// Clip range; the observed ID range when absent.
    #[serde(default)]
    pub clip_range: Option<InputRange>,
}

impl Default for FgsmConfig {
    fn default() -> Self {
        FgsmConfig {
            epsilon_grid: vec![0.005, 0.01, 0.1],
            loss_kind: LossKind::default(),
            clip_range: None,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ε·sign(∇ₓ loss)` for each sample, with `sign(0) = 0`.
pub fn fgsm_perturbation(
    net: &TaskNet,
    data: &LabeledDataset,
    loss: LossKind,
    epsilon: f64,
) -> Result<Matrix> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let g = net.input_gradient(data.inputs(), data.labels(), loss)?;
    Ok(g.map(|v| epsilon * sign(v)))
}

/// Adversarial copies `clip(x + ε·sign(∇ₓ loss))`; labels are kept.
pub fn gen_fgsm(
    data: &LabeledDataset,
    net: &TaskNet,
    cfg: &FgsmConfig,
    epsilon: f64,
) -> Result<LabeledDataset> {
    let bounds = match &cfg.clip_range {
        Some(r) => r.bounds(data.dim())?,
        None => InputRange::observed(data)?.bounds(data.dim())?,
    };
    let delta = fgsm_perturbation(net, data, cfg.loss_kind, epsilon)?;
    let mut adv = data.inputs().clone();
    for (row, d) in adv
        .as_mut_slice()
        .chunks_mut(data.dim())
        .zip(delta.row_iter())
    {
        for ((v, dv), &(lo, hi)) in row.iter_mut().zip(d).zip(&bounds) {
            *v = (*v + dv).clamp(lo, hi);
        }
    }
    LabeledDataset::with_classes(adv, data.labels().to_vec(), data.class_ids().to_vec())
        .map(|d| d.tagged(FGSM_TAG))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Gaussian,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineHyper {
    pub kind: BaselineKind,
    /// Noise σ (pixel units) or FGSM ε.
    pub h: f64,
}

/// Fixed inputs of a baseline run: the network, its detector context and
/// the ID validation rows that form the ID side of every pair.
#[derive(Debug)]
pub struct BaselineSetup {
    pub net: TaskNet,
    pub ctx: DetectorContext,
    pub id_val: LabeledDataset,
    pub noise: GaussianNoiseConfig,
    pub fgsm: FgsmConfig,
    pub s_pairs: usize,
    pub pair_size: usize,
    pub objective: ObjectiveKind,
    noise_range: Vec<(f64, f64)>,
}

impl BaselineSetup {
    /// `id_train` supplies the detector context and the noise coordinate
    /// ranges; `id_val` the ID side of the pairs.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: TaskNet,
        id_train: &LabeledDataset,
        id_val: LabeledDataset,
        noise: GaussianNoiseConfig,
        fgsm: FgsmConfig,
        s_pairs: usize,
        pair_size: usize,
        objective: ObjectiveKind,
        seed: u64,
    ) -> Result<Self> {
        if id_val.is_empty() {
            return Err(Error::Invalid("baseline ID validation set is empty".into()));
        }
        if s_pairs == 0 || pair_size == 0 {
            return Err(Error::Invalid(
                "s_pairs and pair_size must be positive".into(),
            ));
        }
        noise.validate()?;
        let reference = net.penultimate(id_train.inputs())?;
        let ctx = DetectorContext::new(
            net.head(),
            &reference,
            seed::derive(seed, &[stream::KNN_SUBSAMPLE]),
        )?;
        let noise_range = InputRange::observed(id_train)?.bounds(id_train.dim())?;
        Ok(BaselineSetup {
            net,
            ctx,
            id_val,
            noise,
            fgsm,
            s_pairs,
            pair_size,
            objective,
            noise_range,
        })
    }

    /// The hyperparameter grid of `kind`.
    pub fn grid(&self, kind: BaselineKind) -> Vec<BaselineHyper> {
        let hs = match kind {
            BaselineKind::Gaussian => &self.noise.sigma_grid,
            BaselineKind::Adversarial => &self.fgsm.epsilon_grid,
        };
        hs.iter().map(|&h| BaselineHyper { kind, h }).collect()
    }

    /// Simulated OOD set for `h`; noise is drawn from `seed`, FGSM is
    /// deterministic.
    pub fn ood_set(&self, h: BaselineHyper, seed: u64) -> Result<LabeledDataset> {
        match h.kind {
            BaselineKind::Gaussian => {
                gen_gaussian_noise(&self.noise, h.h, &self.noise_range, self.id_val.len(), seed)
            }
            BaselineKind::Adversarial => gen_fgsm(&self.id_val, &self.net, &self.fgsm, h.h),
        }
    }

    /// `S` pairs for `h` under the lineage stream `tag`
    /// (`BASELINE_FIT` or `BASELINE_REVALIDATE`).
    pub fn pairs(&self, h: BaselineHyper, tag: u64, seed: u64) -> Result<Vec<TunePair>> {
        let hb = h.h.to_bits();
        let ood = self.ood_set(h, seed::derive(seed, &[stream::NOISE, tag, hb]))?;
        let origin = if tag == stream::BASELINE_FIT {
            PairOrigin::Fit
        } else {
            PairOrigin::Resample { root: seed }
        };
        (0..self.s_pairs)
            .map(|j| {
                let s = seed::derive(seed, &[tag, hb, j as u64]);
                let (id, ood) = balance_pair(&self.id_val, &ood, self.pair_size, s)?;
                Ok(TunePair {
                    id,
                    ood,
                    lineage: Lineage { origin, seed: s },
                })
            })
            .collect()
    }

    pub fn prepare(&self, pairs: &[TunePair]) -> Result<PreparedNet> {
        PreparedNet::with_context(self.ctx.clone(), &self.net, pairs)
    }
}

/// Mean objective of `detector` over prepared baseline pairs.
pub fn baseline_loss(
    detector: &Detector,
    prepared: &PreparedNet,
    kind: ObjectiveKind,
) -> Result<f64> {
    prepared.mean_value(detector, kind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub hyper: BaselineHyper,
    pub detector: Detector,
    pub fit_value: f64,
    pub revalidated_value: f64,
    pub trace: BoTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSelection {
    pub family: Family,
    pub objective: ObjectiveKind,
    pub rows: Vec<BaselineRow>,
    pub best: BaselineHyper,
    pub detector: Detector,
}

/// Index of the largest value; ties go to the earliest.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// For each `h`: fit detector parameters on the fit pairs, then recompute
/// the objective on pairs from the revalidation stream. Returns every row and
/// the `h` with the highest recomputed value.
pub fn select_h(
    family: Family,
    setup: &BaselineSetup,
    grid: &[BaselineHyper],
    bo_cfg: &BoConfig,
    seed: u64,
) -> Result<BaselineSelection> {
    if grid.is_empty() {
        return Err(Error::Invalid("baseline grid is empty".into()));
    }
    let space = family.space(&setup.ctx.bounds())?;
    let kind = setup.objective;
    let rows = grid
        .par_iter()
        .map(|&h| {
            let fit = setup.prepare(&setup.pairs(h, stream::BASELINE_FIT, seed)?)?;
            let bo = bo_cfg.with_seed(seed::derive(
                seed,
                &[stream::BAYESOPT, bo_cfg.seed, h.h.to_bits()],
            ));
            let trace = maximize(
                |x| baseline_loss(&family.detector_at(x)?, &fit, kind),
                &space,
                &bo,
            )?;
            let detector = family.detector_at(&trace.best_point)?;
            let reval = setup.prepare(&setup.pairs(h, stream::BASELINE_REVALIDATE, seed)?)?;
            let revalidated_value = mean(&reval.pair_values(&detector, kind)?);
            Ok(BaselineRow {
                hyper: h,
                detector,
                fit_value: trace.best_value,
                revalidated_value,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.revalidated_value).collect();
    let best = argmax_first(&values).expect("non-empty grid");
    Ok(BaselineSelection {
        family,
        objective: kind,
        best: rows[best].hyper,
        detector: rows[best].detector,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Layer;

    #[test]
    fn tiny_sigma_collapses_to_mu() {
        let cfg = GaussianNoiseConfig::default();
        let d = gen_gaussian_noise(&cfg, 1e-12, &[(0.0, 255.0); 4], 50, 1).unwrap();
        assert!(d
            .inputs()
            .as_slice()
            .iter()
            .all(|v| (v - 128.0).abs() < 1e-9));
        assert!(d.labels().iter().all(|&l| l == NOISE_LABEL));
        assert_eq!(
            d,
            gen_gaussian_noise(&cfg, 1e-12, &[(0.0, 255.0); 4], 50, 1).unwrap()
        );
    }

    #[test]
    fn noise_maps_into_coordinate_ranges() {
        let cfg = GaussianNoiseConfig::default();
        let ranges = [(-1.0, 1.0), (10.0, 12.0)];
        let d = gen_gaussian_noise(&cfg, 128.0, &ranges, 500, 3).unwrap();
        for row in d.inputs().row_iter() {
            for (v, (lo, hi)) in row.iter().zip(ranges) {
                assert!(*v >= lo && *v <= hi);
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_inputs_unchanged() {
        let layers = vec![
            Layer::new(Matrix::zeros(3, 2), vec![0.0; 3]).unwrap(),
            Layer::new(Matrix::zeros(2, 3), vec![0.0; 2]).unwrap(),
        ];
        let net = TaskNet::from_layers(layers, vec![0, 1]).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, 0.4], vec![0.6, 0.8]]).unwrap();
        let d = LabeledDataset::new(x, vec![0, 1]).unwrap();
        let cfg = FgsmConfig {
            clip_range: Some(InputRange::Uniform { lo: 0.0, hi: 1.0 }),
            ..FgsmConfig::default()
        };
        let adv = gen_fgsm(&d, &net, &cfg, 0.1).unwrap();
        assert_eq!(adv.inputs(), d.inputs());
        assert_eq!(adv.labels(), d.labels());
    }

    #[test]
    fn argmax_prefers_first_tie() {
        assert_eq!(argmax_first(&[0.6, 0.9, 0.9]), Some(1));
        assert_eq!(argmax_first(&[]), None);
    }
}
