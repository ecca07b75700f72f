//! Exact Gaussian-process regression with a Matérn-5/2 kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_ESCALATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scale: f64,
    pub signal_variance: f64,
    /// Added to the kernel diagonal.
    pub noise: f64,
}

pub fn matern52(a: &[f64], b: &[f64], length_scale: f64, signal_variance: f64) -> f64 {
    let r = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
        / length_scale;
    signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

/// Lower-triangular Cholesky factor (row-major, n×n) or `None`.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    // solves Lᵀ x = b
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// A fitted GP: Cholesky factor of the kernel matrix and the weights
/// `K⁻¹(y − m)`.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    hyper: GpHyper,
    mean: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    /// Diagonal jitter actually used after escalation.
    jitter: f64,
}

impl GpModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], hyper: GpHyper) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::Invalid(format!(
                "GP needs matching non-empty training data ({} inputs, {} targets)",
                n,
                y.len()
            )));
        }
        if !(hyper.length_scale > 0.0 && hyper.signal_variance > 0.0 && hyper.noise > 0.0) {
            return Err(Error::Invalid("GP hyperparameters must be positive".into()));
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = matern52(&x[i], &x[j], hyper.length_scale, hyper.signal_variance);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut jitter = hyper.noise;
        for _ in 0..JITTER_ESCALATIONS {
            let mut kj = k.clone();
            for i in 0..n {
                kj[i * n + i] += jitter;
            }
            if let Some(chol) = cholesky(&kj, n) {
                let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
                let alpha = solve_upper_t(&chol, n, &solve_lower(&chol, n, &centered));
                return Ok(GpModel {
                    x: x.to_vec(),
                    hyper,
                    mean,
                    chol,
                    alpha,
                    jitter,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::NotPositiveDefinite { jitter })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let kq: Vec<f64> = self
            .x
            .iter()
            .map(|xi| matern52(xi, q, self.hyper.length_scale, self.hyper.signal_variance))
            .collect();
        let mean = self.mean + kq.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = solve_lower(&self.chol, n, &kq);
        let var = self.hyper.signal_variance - v.iter().map(|t| t * t).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Log marginal likelihood of the training targets.
    pub fn log_marginal_likelihood(&self, y: &[f64]) -> f64 {
        let n = self.x.len();
        let fit: f64 = y
            .iter()
            .zip(&self.alpha)
            .map(|(yi, a)| (yi - self.mean) * a)
            .sum();
        let log_det: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum::<f64>() * 2.0;
        -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Posterior mean and variance at each query point.
pub fn gp_posterior(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    query_x: &[Vec<f64>],
    hyper: GpHyper,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = GpModel::fit(train_x, train_y, hyper)?;
    Ok(query_x.iter().map(|q| model.predict(q)).unzip())
}

/// Log-spaced grid of candidate length scales on the unit cube.
pub fn length_scale_grid() -> Vec<f64> {
    const N: usize = 24;
    let (lo, hi) = (0.01f64.ln(), 5.0f64.ln());
    (0..N)
        .map(|i| (lo + (hi - lo) * i as f64 / (N - 1) as f64).exp())
        .collect()
}

/// Fits the shared length scale by maximizing the marginal likelihood over
/// [`length_scale_grid`]; ties go to the smaller scale.
pub fn fit_length_scale(
    x: &[Vec<f64>],
    y: &[f64],
    signal_variance: f64,
    noise: f64,
) -> Result<GpModel> {
    let mut best: Option<(f64, GpModel)> = None;
    let mut last_err = None;
    for ls in length_scale_grid() {
        let hyper = GpHyper {
            length_scale: ls,
            signal_variance,
            noise,
        };
        match GpModel::fit(x, y, hyper) {
            Ok(m) => {
                let lml = m.log_marginal_likelihood(y);
                if lml.is_finite() && best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, m));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, m)), _) => Ok(m),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::NotPositiveDefinite { jitter: noise }),
    }
}
