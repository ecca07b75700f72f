//! Post-hoc detectors. Shaping families (ReAct, ASH-B, VRA, PLF) transform
//! penultimate features and score with the energy of the resulting logits;
//! KNN scores by distance to the ID reference set. Every score is oriented so
//! that higher means more in-distribution.

mod knn;
mod params;
mod quantile;
mod shaping;

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use knn::{knn_score, KnnIndex};
pub use params::*;
pub use quantile::QuantileMap;
pub use shaping::{
    ash_keep_count, plf_breakpoints, plf_value, shape_ash_b, shape_plf, shape_react, shape_vra,
    vra_thresholds, vra_value,
};

use crate::bayesopt::{Dim, ParamSpace};
use crate::data::{FeatureSet, HeadWeights};
use crate::error::{Error, Result};
use crate::net::log_sum_exp;

/// Default cap on the KNN reference set.
pub const KNN_REFERENCE_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    React,
    AshB,
    Vra,
    Plf,
    Knn,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::React,
        Family::AshB,
        Family::Vra,
        Family::Plf,
        Family::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::React => "react",
            Family::AshB => "ash_b",
            Family::Vra => "vra",
            Family::Plf => "plf",
            Family::Knn => "knn",
        }
    }

    /// Search box for this family. `bounds` supplies the data-dependent parts
    /// (ReAct's activation interval, the KNN reference size).
    pub fn space(self, bounds: &SpaceBounds) -> Result<ParamSpace> {
        let c = |name: &str, (lo, hi): (f64, f64)| Dim::continuous(name, lo, hi);
        let dims = match self {
            Family::React => {
                let (lo, hi) = bounds.activation_range;
                // a degenerate activation range still needs a non-empty box
                let hi = if hi > lo {
                    hi
                } else {
                    lo + 1e-9 * lo.abs().max(1.0)
                };
                vec![c("tau", (lo, hi))]
            }
            Family::AshB => vec![c("p", ASH_P)],
            Family::Vra => vec![
                c("eta_alpha", VRA_ETA_ALPHA),
                c("u", UNIT),
                c("gamma", VRA_GAMMA),
            ],
            Family::Plf => vec![
                c("y_start", PLF_Y_START),
                c("y_end", PLF_Y_END),
                c("delta_y", PLF_DELTA_Y),
                c("q1", PLF_Q1),
                c("u", UNIT),
                c("m1", PLF_M1),
                c("m2", PLF_M2),
            ],
            Family::Knn => {
                let k_max = KNN_K_MAX.min(bounds.knn_reference_size);
                if k_max < 2 {
                    return Err(Error::Invalid(format!(
                        "KNN search needs a reference of at least 2 rows, have {}",
                        bounds.knn_reference_size
                    )));
                }
                vec![Dim::integer("k", 1.0, k_max as f64)]
            }
        };
        ParamSpace::new(dims)
    }

    /// Detector at a point of [`Family::space`].
    pub fn detector_at(self, x: &[f64]) -> Result<Detector> {
        let want = match self {
            Family::React | Family::AshB | Family::Knn => 1,
            Family::Vra => 3,
            Family::Plf => 7,
        };
        if x.len() != want {
            return Err(Error::Shape(format!(
                "{} takes {want} parameters, got {}",
                self.name(),
                x.len()
            )));
        }
        let d = match self {
            Family::React => Detector::React(ReactParams { tau: x[0] }),
            Family::AshB => Detector::AshB(AshParams { p: x[0] }),
            Family::Vra => Detector::Vra(VraParams {
                eta_alpha: x[0],
                u: x[1],
                gamma: x[2],
            }),
            Family::Plf => Detector::Plf(PlfParams {
                y_start: x[0],
                y_end: x[1],
                delta_y: x[2],
                q1: x[3],
                u: x[4],
                m1: x[5],
                m2: x[6],
            }),
            Family::Knn => Detector::Knn(KnnParams {
                k: x[0].round().max(1.0) as usize,
            }),
        };
        Ok(d)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown detector family '{s}'")))
    }
}

/// Data-dependent limits of the search boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceBounds {
    pub activation_range: (f64, f64),
    pub knn_reference_size: usize,
}

impl SpaceBounds {
    /// Union of activation ranges; smallest reference size.
    pub fn union(all: impl IntoIterator<Item = SpaceBounds>) -> Option<SpaceBounds> {
        all.into_iter().reduce(|a, b| SpaceBounds {
            activation_range: (
                a.activation_range.0.min(b.activation_range.0),
                a.activation_range.1.max(b.activation_range.1),
            ),
            knn_reference_size: a.knn_reference_size.min(b.knn_reference_size),
        })
    }
}

/// A detector family together with a point in its parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Detector {
    React(ReactParams),
    AshB(AshParams),
    Vra(VraParams),
    Plf(PlfParams),
    Knn(KnnParams),
}

impl Detector {
    pub fn family(&self) -> Family {
        match self {
            Detector::React(_) => Family::React,
            Detector::AshB(_) => Family::AshB,
            Detector::Vra(_) => Family::Vra,
            Detector::Plf(_) => Family::Plf,
            Detector::Knn(_) => Family::Knn,
        }
    }

    pub fn point(&self) -> Vec<f64> {
        match *self {
            Detector::React(p) => vec![p.tau],
            Detector::AshB(p) => vec![p.p],
            Detector::Vra(p) => vec![p.eta_alpha, p.u, p.gamma],
            Detector::Plf(p) => vec![p.y_start, p.y_end, p.delta_y, p.q1, p.u, p.m1, p.m2],
            Detector::Knn(p) => vec![p.k as f64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Detector::React(p) => p.validate(),
            Detector::AshB(p) => p.validate(),
            Detector::Vra(p) => p.validate(),
            Detector::Plf(p) => p.validate(),
            Detector::Knn(p) => p.validate(),
        }
    }
}

/// Everything a detector needs from the ID side of one network: its head,
/// the quantile maps of its ID features and the KNN reference index.
#[derive(Debug, Clone)]
pub struct DetectorContext {
    head: HeadWeights,
    quantiles: QuantileMap,
    abs_quantiles: QuantileMap,
    knn: KnnIndex,
    activation_range: (f64, f64),
}

impl DetectorContext {
    /// Builds a context from ID reference features, capping the KNN
    /// reference at [`KNN_REFERENCE_CAP`] rows.
    pub fn new(head: HeadWeights, id_reference: &FeatureSet, seed: u64) -> Result<Self> {
        Self::with_knn_cap(head, id_reference, KNN_REFERENCE_CAP, seed)
    }

    pub fn with_knn_cap(
        head: HeadWeights,
        id_reference: &FeatureSet,
        knn_cap: usize,
        seed: u64,
    ) -> Result<Self> {
        if id_reference.dim() != head.feature_dim() {
            return Err(Error::Shape(format!(
                "reference width {} != head width {}",
                id_reference.dim(),
                head.feature_dim()
            )));
        }
        let values = id_reference.matrix().as_slice();
        let quantiles = QuantileMap::new(values.to_vec())?;
        let abs_quantiles = QuantileMap::of_abs(values)?;
        let activation_range = (quantiles.min(), quantiles.max());
        Ok(DetectorContext {
            head,
            quantiles,
            abs_quantiles,
            knn: KnnIndex::capped(id_reference, knn_cap, seed)?,
            activation_range,
        })
    }

    pub fn head(&self) -> &HeadWeights {
        &self.head
    }

    pub fn quantiles(&self) -> &QuantileMap {
        &self.quantiles
    }

    pub fn abs_quantiles(&self) -> &QuantileMap {
        &self.abs_quantiles
    }

    pub fn knn(&self) -> &KnnIndex {
        &self.knn
    }

    pub fn activation_range(&self) -> (f64, f64) {
        self.activation_range
    }

    pub fn bounds(&self) -> SpaceBounds {
        SpaceBounds {
            activation_range: self.activation_range,
            knn_reference_size: self.knn.len(),
        }
    }

    fn knn_k_max(&self) -> usize {
        KNN_K_MAX.min(self.knn.len())
    }
}

/// Energy score: log-sum-exp of the head's logits on `shaped`.
pub fn energy_score(shaped: &FeatureSet, head: &HeadWeights) -> Result<Vec<f64>> {
    let logits = head.logits(shaped)?;
    Ok(logits.row_iter().map(log_sum_exp).collect())
}

/// Applies the detector's shaping function; `None` for KNN.
pub fn shape(
    detector: &Detector,
    z: &FeatureSet,
    ctx: &DetectorContext,
) -> Result<Option<FeatureSet>> {
    Ok(Some(match detector {
        Detector::React(p) => shape_react(z, p),
        Detector::AshB(p) => shape_ash_b(z, p),
        Detector::Vra(p) => shape_vra(z, p, &ctx.quantiles)?,
        Detector::Plf(p) => shape_plf(z, p, &ctx.abs_quantiles)?,
        Detector::Knn(_) => return Ok(None),
    }))
}

/// One score per row of `features`, higher = more in-distribution.
pub fn score(
    detector: &Detector,
    features: &FeatureSet,
    ctx: &DetectorContext,
) -> Result<Vec<f64>> {
    if features.dim() != ctx.head.feature_dim() {
        return Err(Error::Shape(format!(
            "feature width {} != head width {}",
            features.dim(),
            ctx.head.feature_dim()
        )));
    }
    match detector {
        Detector::Knn(p) => ctx.knn.score(features, p.k),
        _ => {
            let shaped = shape(detector, features, ctx)?.expect("shaping family");
            energy_score(&shaped, &ctx.head)
        }
    }
}

/// Features to be scored repeatedly under different detector parameters.
/// KNN neighbour distances are computed once, on first use.
#[derive(Debug)]
pub struct ScoringQuery {
    features: FeatureSet,
    knn_sorted: OnceLock<Result<Vec<Vec<f64>>>>,
}

impl ScoringQuery {
    pub fn new(features: FeatureSet) -> Self {
        ScoringQuery {
            features,
            knn_sorted: OnceLock::new(),
        }
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    /// Same result as [`score`] on the wrapped features.
    pub fn score(&self, detector: &Detector, ctx: &DetectorContext) -> Result<Vec<f64>> {
        let Detector::Knn(p) = detector else {
            return score(detector, &self.features, ctx);
        };
        let k_max = ctx.knn_k_max();
        if p.k == 0 || p.k > k_max {
            return ctx.knn.score(&self.features, p.k);
        }
        let sorted = self
            .knn_sorted
            .get_or_init(|| ctx.knn.sorted_distances(&self.features, k_max));
        match sorted {
            Ok(rows) => Ok(rows.iter().map(|d| -d[p.k - 1]).collect()),
            Err(_) => ctx.knn.score(&self.features, p.k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn head(w: Vec<Vec<f64>>, b: Vec<f64>) -> HeadWeights {
        let ids = (0..b.len() as i32).collect();
        HeadWeights::new(Matrix::from_rows(&w).unwrap(), b, ids).unwrap()
    }

    fn fs(rows: &[Vec<f64>]) -> FeatureSet {
        FeatureSet::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn energy_of_zero_logits_is_ln2() {
        let h = head(vec![vec![0.0], vec![0.0]], vec![0.0, 0.0]);
        let s = energy_score(&fs(&[vec![3.0]]), &h).unwrap();
        assert!((s[0] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn energy_is_stable_for_large_logits() {
        let h = head(vec![vec![1.0], vec![0.0]], vec![0.0, 0.0]);
        let s = energy_score(&fs(&[vec![1000.0]]), &h).unwrap();
        assert_eq!(s[0], 1000.0);
    }

    #[test]
    fn energy_shift_identity() {
        let h = head(vec![vec![0.3, -1.0], vec![2.0, 0.1]], vec![0.2, -0.4]);
        let shifted = head(
            vec![vec![0.3, -1.0], vec![2.0, 0.1]],
            vec![0.2 + 5.0, -0.4 + 5.0],
        );
        let f = fs(&[vec![1.0, 2.0], vec![0.0, 0.5]]);
        let a = energy_score(&f, &h).unwrap();
        let b = energy_score(&f, &shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn detector_points_round_trip() {
        let d = Detector::Plf(PlfParams {
            y_start: -1.0,
            y_end: 2.0,
            delta_y: 0.5,
            q1: 0.2,
            u: 0.3,
            m1: 1.0,
            m2: -2.0,
        });
        assert_eq!(Family::Plf.detector_at(&d.point()).unwrap(), d);
        let k = Family::Knn.detector_at(&[12.4]).unwrap();
        assert_eq!(k, Detector::Knn(KnnParams { k: 12 }));
    }

    #[test]
    fn json_shape() {
        let d = Detector::React(ReactParams { tau: 1.5 });
        let j = serde_json::to_string(&d).unwrap();
        assert_eq!(j, r#"{"family":"react","tau":1.5}"#);
        assert_eq!(serde_json::from_str::<Detector>(&j).unwrap(), d);
    }

    #[test]
    fn knn_ignores_head() {
        let reference = fs(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let q = fs(&[vec![0.3, 0.9], vec![2.0, 0.1]]);
        let d = Detector::Knn(KnnParams { k: 2 });
        let c1 =
            DetectorContext::new(head(vec![vec![1.0, 2.0]], vec![0.0]), &reference, 0).unwrap();
        let c2 =
            DetectorContext::new(head(vec![vec![-7.0, 0.5]], vec![3.0]), &reference, 0).unwrap();
        assert_eq!(score(&d, &q, &c1).unwrap(), score(&d, &q, &c2).unwrap());
    }

    #[test]
    fn cached_query_matches_direct_score() {
        let reference = fs(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.2, 0.7],
        ]);
        let ctx =
            DetectorContext::new(head(vec![vec![1.0, 2.0]], vec![0.0]), &reference, 0).unwrap();
        let q = fs(&[vec![0.3, 0.9], vec![2.0, 0.1]]);
        let cached = ScoringQuery::new(q.clone());
        for k in 1..=4 {
            let d = Detector::Knn(KnnParams { k });
            assert_eq!(
                cached.score(&d, &ctx).unwrap(),
                score(&d, &q, &ctx).unwrap()
            );
        }
    }

    #[test]
    fn family_names_parse() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }
}
