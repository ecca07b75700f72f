use crate::error::{Error, Result};

/// Empirical quantile function of a flattened set of activations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMap {
    sorted: Vec<f64>,
}

impl QuantileMap {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("quantile map over no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("quantile map over non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(QuantileMap { sorted: values })
    }

    /// Map over absolute values, for breakpoints defined on |z|.
    pub fn of_abs(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|v| v.abs()).collect())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Linearly interpolated quantile at position `q·(n−1)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Invalid(format!("quantile level {q} outside [0,1]")));
        }
        let n = self.sorted.len();
        let h = q * (n - 1) as f64;
        let lo = h.floor() as usize;
        if lo + 1 >= n {
            return Ok(self.sorted[n - 1]);
        }
        let frac = h - lo as f64;
        let (a, b) = (self.sorted[lo], self.sorted[lo + 1]);
        // a + frac·(b−a) can overshoot b by an ulp; clamp keeps monotonicity
        Ok((a + frac * (b - a)).clamp(a, b))
    }
}
