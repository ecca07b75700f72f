//! Gaussian-process Bayesian optimization over bounded boxes.
//!
//! Inputs are mapped to the unit cube and outputs standardized before the
//! surrogate is fitted. Each step maximizes expected improvement over a
//! seeded candidate set (uniform draws plus perturbations of the best points
//! so far). Integer dimensions are rounded after the acquisition step and
//! proposals that repeat an evaluated point are replaced.
//!
//! Random stream (a single ChaCha8 generator seeded with `BoConfig::seed`):
//! the initial design draws `n_init` points, one `random::<f64>()` per
//! dimension in order; each iteration then draws its candidates.

mod gp;
mod space;

use rand::Rng as _;
use rand_distr::{Distribution, Normal as NormalSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub use gp::{fit_length_scale, gp_posterior, length_scale_grid, matern52, GpHyper, GpModel};
pub use space::{Dim, DimKind, ParamSpace};

use crate::error::{Error, Result};
use crate::seed;

pub const UNIFORM_CANDIDATES: usize = 2048;
pub const LOCAL_ANCHORS: usize = 8;
pub const LOCAL_PER_ANCHOR: usize = 32;
pub const LOCAL_SCALES: [f64; 2] = [0.02, 0.1];
pub const DEDUP_RETRIES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
}

fn default_noise_floor() -> f64 {
    1e-6
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_init: 8,
            n_iter: 40,
            seed: 0,
            noise_floor: default_noise_floor(),
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::Invalid("n_init must be at least 2".into()));
        }
        if self.noise_floor.is_nan() || self.noise_floor <= 0.0 {
            return Err(Error::Invalid("noise_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> BoConfig {
        BoConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub evaluations: Vec<Evaluation>,
    /// Running maximum after each evaluation.
    pub best_so_far: Vec<f64>,
    pub best_point: Vec<f64>,
    pub best_value: f64,
}

impl BoTrace {
    fn new() -> Self {
        BoTrace {
            evaluations: Vec::new(),
            best_so_far: Vec::new(),
            best_point: Vec::new(),
            best_value: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, point: Vec<f64>, value: f64) {
        if value > self.best_value {
            self.best_value = value;
            self.best_point = point.clone();
        }
        self.best_so_far.push(self.best_value);
        self.evaluations.push(Evaluation { point, value });
    }

    fn seen(&self, x: &[f64]) -> bool {
        self.evaluations.iter().any(|e| e.point == x)
    }
}

/// `(μ−y*)Φ(u) + σφ(u)` with `u = (μ−y*)/σ`, and `max(μ−y*, 0)` where σ = 0.
pub fn expected_improvement(mean: &[f64], variance: &[f64], best_so_far: f64) -> Vec<f64> {
    let n01 = Normal::standard();
    mean.iter()
        .zip(variance)
        .map(|(&m, &v)| {
            let sd = v.max(0.0).sqrt();
            let gain = m - best_so_far;
            if sd == 0.0 {
                return gain.max(0.0);
            }
            let u = gain / sd;
            (gain * n01.cdf(u) + sd * n01.pdf(u)).max(0.0)
        })
        .collect()
}

fn uniform_point(rng: &mut seed::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

fn evaluate(
    f: &mut impl FnMut(&[f64]) -> Result<f64>,
    x: Vec<f64>,
    trace: &mut BoTrace,
) -> Result<()> {
    let value = f(&x)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective { point: x, value });
    }
    trace.record(x, value);
    Ok(())
}

/// Maximizes `f` over `space`: `n_init` seeded uniform points followed by
/// `n_iter` expected-improvement steps.
pub fn maximize(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    space: &ParamSpace,
    cfg: &BoConfig,
) -> Result<BoTrace> {
    cfg.validate()?;
    let d = space.len();
    let mut rng = seed::rng(cfg.seed);
    let mut trace = BoTrace::new();
    for _ in 0..cfg.n_init {
        let u = uniform_point(&mut rng, d);
        evaluate(&mut f, space.from_unit(&u), &mut trace)?;
    }
    let jitter = NormalSampler::new(0.0, 1.0).expect("unit normal");
    for _ in 0..cfg.n_iter {
        let xs: Vec<Vec<f64>> = trace
            .evaluations
            .iter()
            .map(|e| space.to_unit(&e.point))
            .collect();
        let ys: Vec<f64> = trace.evaluations.iter().map(|e| e.value).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        let z: Vec<f64> = ys.iter().map(|y| (y - mean) / scale).collect();
        let model = fit_length_scale(&xs, &z, 1.0, cfg.noise_floor)?;
        let z_best = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut candidates: Vec<Vec<f64>> = (0..UNIFORM_CANDIDATES)
            .map(|_| uniform_point(&mut rng, d))
            .collect();
        let mut ranked: Vec<usize> = (0..xs.len()).collect();
        ranked.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]));
        for &anchor in ranked.iter().take(LOCAL_ANCHORS) {
            for j in 0..LOCAL_PER_ANCHOR {
                let s = LOCAL_SCALES[j % LOCAL_SCALES.len()];
                let c: Vec<f64> = xs[anchor]
                    .iter()
                    .map(|&v| (v + s * jitter.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect();
                candidates.push(c);
            }
        }
        let (mu, var): (Vec<f64>, Vec<f64>) = candidates.iter().map(|c| model.predict(c)).unzip();
        let ei = expected_improvement(&mu, &var, z_best);
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        // stable: equal EI keeps the lower candidate index first
        order.sort_by(|&a, &b| ei[b].total_cmp(&ei[a]));

        let proposal = order
            .iter()
            .take(DEDUP_RETRIES)
            .map(|&i| space.from_unit(&candidates[i]))
            .find(|x| !trace.seen(x))
            .or_else(|| {
                candidates[..UNIFORM_CANDIDATES]
                    .iter()
                    .map(|c| space.from_unit(c))
                    .find(|x| !trace.seen(x))
            })
            .unwrap_or_else(|| space.from_unit(&candidates.swap_remove(order[0])));
        evaluate(&mut f, proposal, &mut trace)?;
    }
    Ok(trace)
}
