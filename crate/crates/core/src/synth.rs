//! Gaussian-mixture corpora for desk-scale experiments.
//!
//! Class `c` has its centre at `separation · u_c` and samples are the centre
//! plus normal noise. With the default layout `u_c` is a unit vector drawn
//! from a stream derived from `(seed, c)`; with [`CentreLayout::Axes`] it is
//! the basis vector `e_(c mod dim)`. Centres do not depend on which other
//! classes are generated, so held-out test classes and fresh ID test draws
//! come from the same mixture as the training corpus.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

const CENTRE_STREAM: u64 = 0xC0;
const SAMPLE_STREAM: u64 = 0x5A;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentreLayout {
    #[default]
    RandomDirections,
    Axes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub dim: usize,
    pub separation: f64,
    /// Per-coordinate noise standard deviation.
    #[serde(default = "one")]
    pub spread: f64,
    #[serde(default)]
    pub layout: CentreLayout,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl GaussianMixture {
    pub fn new(dim: usize, separation: f64, seed: u64) -> Self {
        GaussianMixture {
            dim,
            separation,
            spread: 1.0,
            layout: CentreLayout::RandomDirections,
            seed,
        }
    }

    pub fn centre(&self, class: i32) -> Vec<f64> {
        if self.layout == CentreLayout::Axes {
            let mut c = vec![0.0; self.dim];
            c[class.rem_euclid(self.dim as i32) as usize] = self.separation;
            return c;
        }
        let mut rng = seed::rng(seed::derive(self.seed, &[CENTRE_STREAM, class as u64]));
        let g: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = g
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        g.iter().map(|v| self.separation * v / norm).collect()
    }

    /// `per_class` samples of each listed class. Different `stream` values
    /// give independent draws around the same centres.
    pub fn sample(&self, classes: &[i32], per_class: usize, stream: u64) -> Result<LabeledDataset> {
        if self.dim == 0 {
            return Err(Error::Invalid("mixture dimension must be positive".into()));
        }
        if !(self.separation >= 0.0 && self.spread > 0.0) {
            return Err(Error::Invalid(
                "separation must be >= 0 and spread > 0".into(),
            ));
        }
        let mut data = Vec::with_capacity(classes.len() * per_class * self.dim);
        let mut labels = Vec::with_capacity(classes.len() * per_class);
        for &c in classes {
            let centre = self.centre(c);
            let mut rng = seed::rng(seed::derive(self.seed, &[SAMPLE_STREAM, stream, c as u64]));
            for _ in 0..per_class {
                for mu in &centre {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(mu + self.spread * z);
                }
                labels.push(c);
            }
        }
        let rows = labels.len();
        LabeledDataset::new(Matrix::from_vec(rows, self.dim, data)?, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_determinism() {
        let g = GaussianMixture::new(16, 4.0, 0);
        let classes: Vec<i32> = (0..8).collect();
        let d = g.sample(&classes, 300, 0).unwrap();
        assert_eq!(d.len(), 2400);
        assert_eq!(d, g.sample(&classes, 300, 0).unwrap());
        assert_ne!(d, g.sample(&classes, 300, 1).unwrap());
    }

    #[test]
    fn zero_separation_shares_one_blob() {
        let g = GaussianMixture::new(3, 0.0, 5);
        assert_eq!(g.centre(0), vec![0.0; 3]);
        assert_eq!(g.centre(0), g.centre(7));
    }

    #[test]
    fn axis_layout() {
        let g = GaussianMixture {
            layout: CentreLayout::Axes,
            ..GaussianMixture::new(4, 2.5, 0)
        };
        assert_eq!(g.centre(1), vec![0.0, 2.5, 0.0, 0.0]);
        assert_eq!(g.centre(5), g.centre(1));
    }

    #[test]
    fn centres_independent_of_class_list() {
        let g = GaussianMixture::new(4, 3.0, 2);
        let a = g.sample(&[0, 1, 2], 5, 0).unwrap();
        let b = g.sample(&[2], 5, 0).unwrap();
        assert_eq!(a.inputs().row(10), b.inputs().row(0));
    }
}
