//! Feature shaping functions applied to penultimate activations before the
//! energy score.

use super::params::{AshParams, PlfParams, ReactParams, VraParams};
use super::quantile::QuantileMap;
use crate::data::FeatureSet;
use crate::error::Result;

fn map_elementwise(z: &FeatureSet, f: impl Fn(f64) -> f64) -> FeatureSet {
    FeatureSet::from_trusted(z.matrix().map(f))
}

/// Elementwise `min(z, τ)`.
pub fn shape_react(z: &FeatureSet, p: &ReactParams) -> FeatureSet {
    let tau = p.tau;
    map_elementwise(z, |v| v.min(tau))
}

/// Number of activations ASH-B keeps in a row of width `d`.
pub fn ash_keep_count(d: usize, p: f64) -> usize {
    (((1.0 - p / 100.0) * d as f64).round() as usize).clamp(1, d.max(1))
}

/// ASH-B: keep the top-k activations of each row (ties toward lower index),
/// set each kept entry to `S/k` where `S` is the row sum, zero the rest.
pub fn shape_ash_b(z: &FeatureSet, p: &AshParams) -> FeatureSet {
    let mut out = z.matrix().clone();
    let d = out.cols();
    if d == 0 {
        return FeatureSet::from_trusted(out);
    }
    let k = ash_keep_count(d, p.p);
    let mut order: Vec<usize> = Vec::with_capacity(d);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let sum: f64 = row.iter().sum();
        order.clear();
        order.extend(0..d);
        // stable sort keeps lower indices first among equal values
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        let fill = sum / k as f64;
        let mut keep = vec![false; d];
        for &i in &order[..k] {
            keep[i] = true;
        }
        for (v, kept) in row.iter_mut().zip(keep) {
            *v = if kept { fill } else { 0.0 };
        }
    }
    FeatureSet::from_trusted(out)
}

#[inline]
pub fn vra_value(v: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    if v < alpha {
        0.0
    } else if v <= beta {
        v + gamma
    } else {
        beta
    }
}

/// Thresholds `(α, β)` resolved from the ID quantile map.
pub fn vra_thresholds(p: &VraParams, map: &QuantileMap) -> Result<(f64, f64)> {
    Ok((map.quantile(p.eta_alpha)?, map.quantile(p.eta_beta())?))
}

/// VRA: 0 below α, `z + γ` on [α, β], β above.
pub fn shape_vra(z: &FeatureSet, p: &VraParams, map: &QuantileMap) -> Result<FeatureSet> {
    let (alpha, beta) = vra_thresholds(p, map)?;
    let gamma = p.gamma;
    Ok(map_elementwise(z, |v| vra_value(v, alpha, beta, gamma)))
}

/// The three-segment piecewise linear map with breakpoints `x1 < x2`:
/// `y_start + m1·z` below x1, `y_end + m2·(z − x1)` on [x1, x2), and the
/// constant `y1` from x2 on.
#[inline]
pub fn plf_value(v: f64, p: &PlfParams, x1: f64, x2: f64) -> f64 {
    if v < x1 {
        p.y_start + p.m1 * v
    } else if v < x2 {
        p.y_end + p.m2 * (v - x1)
    } else {
        p.y1()
    }
}

pub fn plf_breakpoints(p: &PlfParams, abs_map: &QuantileMap) -> Result<(f64, f64)> {
    Ok((abs_map.quantile(p.q1)?, abs_map.quantile(p.q2())?))
}

pub fn shape_plf(z: &FeatureSet, p: &PlfParams, abs_map: &QuantileMap) -> Result<FeatureSet> {
    let (x1, x2) = plf_breakpoints(p, abs_map)?;
    Ok(map_elementwise(z, |v| plf_value(v, p, x1, x2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> FeatureSet {
        FeatureSet::new(Matrix::from_vec(1, v.len(), v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn react_examples() {
        let z = row(&[1.0, 5.0, 2.0]);
        assert_eq!(
            shape_react(&z, &ReactParams { tau: 3.0 }).matrix().row(0),
            &[1.0, 3.0, 2.0]
        );
        assert_eq!(shape_react(&z, &ReactParams { tau: 5.0 }), z);
        assert!(shape_react(&z, &ReactParams { tau: 0.0 })
            .matrix()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn ash_b_example() {
        let z = row(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ash_keep_count(4, 50.0), 2);
        assert_eq!(
            shape_ash_b(&z, &AshParams { p: 50.0 }).matrix().row(0),
            &[0.0, 0.0, 5.0, 5.0]
        );
    }

    #[test]
    fn ash_b_ties_go_to_lower_index() {
        let z = row(&[2.0, 2.0, 2.0, 2.0]);
        let out = shape_ash_b(&z, &AshParams { p: 50.0 });
        assert_eq!(out.matrix().row(0), &[4.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn ash_b_small_p_is_uniform() {
        let z = row(&[1.0, 0.0, 3.0, 4.0]);
        let out = shape_ash_b(&z, &AshParams { p: 1e-9 });
        assert_eq!(out.matrix().row(0), &[2.0; 4]);
        // never prunes everything
        assert_eq!(ash_keep_count(4, 99.9), 1);
    }

    #[test]
    fn vra_examples() {
        assert_eq!(vra_value(0.5, 1.0, 3.0, 0.5), 0.0);
        assert_eq!(vra_value(2.0, 1.0, 3.0, 0.5), 2.5);
        assert_eq!(vra_value(4.0, 1.0, 3.0, 0.5), 3.0);
    }

    #[test]
    fn vra_middle_branch_identity() {
        // map's quantile range straddles every z
        let map = QuantileMap::new((0..=100).map(|i| i as f64 / 10.0 - 1.0).collect()).unwrap();
        let p = VraParams {
            eta_alpha: 0.1,
            u: 1.0,
            gamma: 0.0,
        };
        let (alpha, beta) = vra_thresholds(&p, &map).unwrap();
        let z = row(&[alpha, 3.0, 4.5, beta]);
        assert_eq!(shape_vra(&z, &p, &map).unwrap(), z);
    }

    #[test]
    fn plf_examples() {
        let p = PlfParams {
            y_start: -1.0,
            y_end: 0.0,
            delta_y: 2.0,
            q1: 0.1,
            u: 0.0,
            m1: 1.0,
            m2: 0.5,
        };
        assert_eq!(plf_value(1.0, &p, 2.0, 4.0), 0.0);
        assert_eq!(plf_value(3.0, &p, 2.0, 4.0), 0.5);
        assert_eq!(plf_value(5.0, &p, 2.0, 4.0), 2.0);
        let id = PlfParams {
            y_start: 0.0,
            m1: 1.0,
            ..p
        };
        assert_eq!(plf_value(1.25, &id, 2.0, 4.0), 1.25);
    }

    proptest! {
        #[test]
        fn react_is_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, tau in 0.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let out = shape_react(&row(&[lo, hi]), &ReactParams { tau });
            prop_assert!(out.matrix().get(0, 0) <= out.matrix().get(0, 1));
        }

        #[test]
        fn ash_b_preserves_row_sum(v in prop::collection::vec(0.0f64..20.0, 1..40), p in 0.5f64..99.5) {
            let z = row(&v);
            let s: f64 = v.iter().sum();
            let out: f64 = shape_ash_b(&z, &AshParams { p }).matrix().as_slice().iter().sum();
            prop_assert!((out - s).abs() <= 1e-9 * s.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn vra_bounded_by_branches(v in prop::collection::vec(0.0f64..20.0, 1..20),
                                   ea in 0.1f64..=0.8, u in 0.0f64..=1.0, gamma in 0.0f64..=5.0) {
            let map = QuantileMap::new(v.clone()).unwrap();
            let p = VraParams { eta_alpha: ea, u, gamma };
            let (_, beta) = vra_thresholds(&p, &map).unwrap();
            let zmax = v.iter().cloned().fold(f64::MIN, f64::max);
            let out = shape_vra(&row(&v), &p, &map).unwrap();
            for &o in out.matrix().as_slice() {
                prop_assert!(o <= beta.max(zmax + gamma));
            }
        }
    }
}
