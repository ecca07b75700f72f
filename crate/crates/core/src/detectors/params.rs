use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VRA_ETA_ALPHA: (f64, f64) = (0.1, 0.8);
pub const VRA_GAMMA: (f64, f64) = (0.0, 5.0);
pub const PLF_Y_START: (f64, f64) = (-5.0, 0.0);
pub const PLF_Y_END: (f64, f64) = (0.0, 5.0);
pub const PLF_DELTA_Y: (f64, f64) = (0.0, 5.0);
pub const PLF_Q1: (f64, f64) = (0.1, 0.8);
pub const PLF_M1: (f64, f64) = (0.0, 5.0);
pub const PLF_M2: (f64, f64) = (-5.0, 5.0);
pub const UNIT: (f64, f64) = (0.0, 1.0);
/// Search box for the ASH pruning percentile.
pub const ASH_P: (f64, f64) = (1.0, 99.0);
pub const KNN_K_MAX: usize = 500;

/// Minimum gap between the lower and upper quantile levels.
pub const QUANTILE_GAP_MIN: f64 = 0.10;
/// Upper quantile levels never exceed this.
pub const QUANTILE_CEILING: f64 = 0.99;

/// Upper quantile level `lower + δ`, with `δ = δmin + u·(δmax − δmin)` and
/// `δmax = 0.99 − lower`.
pub fn upper_quantile(lower: f64, u: f64) -> f64 {
    let gap_max = QUANTILE_CEILING - lower;
    lower + QUANTILE_GAP_MIN + u * (gap_max - QUANTILE_GAP_MIN)
}

fn check_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo..=hi).contains(&v) {
        return Err(Error::Invalid(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactParams {
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AshParams {
    /// Percent of activations pruned per sample.
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VraParams {
    pub eta_alpha: f64,
    pub u: f64,
    pub gamma: f64,
}

impl VraParams {
    pub fn eta_beta(&self) -> f64 {
        upper_quantile(self.eta_alpha, self.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlfParams {
    pub y_start: f64,
    pub y_end: f64,
    pub delta_y: f64,
    pub q1: f64,
    pub u: f64,
    pub m1: f64,
    pub m2: f64,
}

impl PlfParams {
    /// Saturation level above the upper breakpoint.
    pub fn y1(&self) -> f64 {
        self.y_end + self.delta_y
    }

    pub fn q2(&self) -> f64 {
        upper_quantile(self.q1, self.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl ReactParams {
    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Invalid("tau must be finite".into()));
        }
        Ok(())
    }
}

impl AshParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 100.0) {
            return Err(Error::Invalid(format!(
                "ASH percentile {} outside (0,100)",
                self.p
            )));
        }
        Ok(())
    }
}

impl VraParams {
    pub fn validate(&self) -> Result<()> {
        check_range("eta_alpha", self.eta_alpha, VRA_ETA_ALPHA)?;
        check_range("u", self.u, UNIT)?;
        check_range("gamma", self.gamma, VRA_GAMMA)
    }
}

impl PlfParams {
    pub fn validate(&self) -> Result<()> {
        check_range("y_start", self.y_start, PLF_Y_START)?;
        check_range("y_end", self.y_end, PLF_Y_END)?;
        check_range("delta_y", self.delta_y, PLF_DELTA_Y)?;
        check_range("q1", self.q1, PLF_Q1)?;
        check_range("u", self.u, UNIT)?;
        check_range("m1", self.m1, PLF_M1)?;
        check_range("m2", self.m2, PLF_M2)
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > KNN_K_MAX {
            return Err(Error::Invalid(format!(
                "k = {} outside [1, {KNN_K_MAX}]",
                self.k
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn derived_quantiles_stay_ordered(lower in 0.1f64..=0.8, u in 0.0f64..=1.0) {
            let upper = upper_quantile(lower, u);
            prop_assert!(upper > lower);
            prop_assert!(upper <= QUANTILE_CEILING + 1e-15);
            let vra = VraParams { eta_alpha: lower, u, gamma: 1.0 };
            prop_assert!(vra.eta_beta() > vra.eta_alpha);
        }
    }

    #[test]
    fn extremes_of_u() {
        assert!((upper_quantile(0.3, 0.0) - 0.4).abs() < 1e-15);
        assert!((upper_quantile(0.3, 1.0) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_out_of_box() {
        assert!(AshParams { p: 0.0 }.validate().is_err());
        assert!(AshParams { p: 100.0 }.validate().is_err());
        assert!(KnnParams { k: 0 }.validate().is_err());
        assert!(KnnParams { k: 501 }.validate().is_err());
        assert!(VraParams {
            eta_alpha: 0.9,
            u: 0.5,
            gamma: 1.0
        }
        .validate()
        .is_err());
    }
}
