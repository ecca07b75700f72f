//! K-th nearest neighbour distance in L2-normalized feature space.

use rand::seq::index::sample;
use rayon::prelude::*;

use super::params::KnnParams;
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

fn normalized(row: &[f64]) -> Vec<f64> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; row.len()];
    }
    row.iter().map(|v| v / norm).collect()
}

/// Normalized reference rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    rows: Matrix,
}

impl KnnIndex {
    pub fn new(reference: &FeatureSet) -> Result<Self> {
        if reference.rows() == 0 {
            return Err(Error::Invalid("KNN reference set is empty".into()));
        }
        let m = reference.matrix();
        let mut rows = Matrix::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            rows.row_mut(r).copy_from_slice(&normalized(m.row(r)));
        }
        Ok(KnnIndex { rows })
    }

    /// Index over at most `cap` reference rows, subsampled with `seed` when
    /// the reference is larger.
    pub fn capped(reference: &FeatureSet, cap: usize, seed: u64) -> Result<Self> {
        if reference.rows() <= cap {
            return Self::new(reference);
        }
        let mut rng = seed::rng(seed);
        let mut idx = sample(&mut rng, reference.rows(), cap).into_vec();
        idx.sort_unstable();
        Self::new(&reference.select(&idx))
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    /// Euclidean distances from one normalized query to every reference row.
    fn distances(&self, q: &[f64]) -> Vec<f64> {
        self.rows
            .row_iter()
            .map(|r| {
                r.iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    fn check(&self, query: &FeatureSet, k: usize) -> Result<()> {
        if query.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "query width {} != reference width {}",
                query.dim(),
                self.dim()
            )));
        }
        if k == 0 || k > self.len() {
            return Err(Error::Invalid(format!(
                "k = {k} but the reference holds {} rows",
                self.len()
            )));
        }
        Ok(())
    }

    /// Negative distance to the k-th nearest reference row, per query row.
    pub fn score(&self, query: &FeatureSet, k: usize) -> Result<Vec<f64>> {
        self.check(query, k)?;
        let m = query.matrix();
        Ok((0..m.rows())
            .into_par_iter()
            .map(|r| {
                let mut d = self.distances(&normalized(m.row(r)));
                let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
                -*kth
            })
            .collect())
    }

    /// The `k_max` smallest distances of each query row, ascending. Scores for
    /// any `k <= k_max` can then be read off without recomputing distances.
    pub fn sorted_distances(&self, query: &FeatureSet, k_max: usize) -> Result<Vec<Vec<f64>>> {
        self.check(query, k_max)?;
        let m = query.matrix();
        Ok((0..m.rows())
            .into_par_iter()
            .map(|r| {
                let mut d = self.distances(&normalized(m.row(r)));
                if k_max < d.len() {
                    d.select_nth_unstable_by(k_max - 1, f64::total_cmp);
                    d.truncate(k_max);
                }
                d.sort_by(f64::total_cmp);
                d
            })
            .collect())
    }
}

/// One-shot KNN score of `query` against `reference`.
pub fn knn_score(query: &FeatureSet, reference: &FeatureSet, p: &KnnParams) -> Result<Vec<f64>> {
    KnnIndex::new(reference)?.score(query, p.k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(rows: &[Vec<f64>]) -> FeatureSet {
        FeatureSet::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn exact_match_scores_zero() {
        let reference = fs(&[vec![1.0, 2.0], vec![3.0, 0.5]]);
        let s = knn_score(&fs(&[vec![3.0, 0.5]]), &reference, &KnnParams { k: 1 }).unwrap();
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn orthogonal_reference_chord_distance() {
        let reference = fs(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let q = fs(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let s = knn_score(&q, &reference, &KnnParams { k: 1 }).unwrap();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 0.0);
        let expected = -(2.0 - 2.0_f64.sqrt()).sqrt();
        assert!((s[2] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_normalize_to_zero() {
        let reference = fs(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        let s = knn_score(&fs(&[vec![0.0, 0.0]]), &reference, &KnnParams { k: 1 }).unwrap();
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn nonincreasing_in_k_and_consistent_with_sorted_path() {
        let mut rng = seed::rng(4);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let reference = fs(&rows[..30]);
        let query = fs(&rows[30..]);
        let index = KnnIndex::new(&reference).unwrap();
        let sorted = index.sorted_distances(&query, 30).unwrap();
        let mut prev = vec![f64::INFINITY; query.rows()];
        for k in 1..=30 {
            let s = index.score(&query, k).unwrap();
            for (r, v) in s.iter().enumerate() {
                assert!(*v <= prev[r]);
                assert_eq!(*v, -sorted[r][k - 1]);
            }
            prev = s;
        }
    }

    #[test]
    fn k_larger_than_reference_rejected() {
        let reference = fs(&[vec![1.0, 0.0]]);
        assert!(knn_score(&reference, &reference, &KnnParams { k: 2 }).is_err());
    }

    #[test]
    fn capped_index_subsamples() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 1.0]).collect();
        let idx = KnnIndex::capped(&fs(&rows), 20, 9).unwrap();
        assert_eq!(idx.len(), 20);
        assert_eq!(idx, KnnIndex::capped(&fs(&rows), 20, 9).unwrap());
    }
}
