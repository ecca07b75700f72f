use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    Continuous,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: DimKind,
}

impl Dim {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Dim {
        Dim {
            name: name.into(),
            lower,
            upper,
            kind: DimKind::Continuous,
        }
    }

    pub fn integer(name: &str, lower: f64, upper: f64) -> Dim {
        Dim {
            name: name.into(),
            lower,
            upper,
            kind: DimKind::Integer,
        }
    }

    fn value_at(&self, u: f64) -> f64 {
        let v = self.lower + u.clamp(0.0, 1.0) * (self.upper - self.lower);
        let v = match self.kind {
            DimKind::Continuous => v,
            DimKind::Integer => v.round(),
        };
        v.clamp(self.lower, self.upper)
    }

    fn to_unit(&self, v: f64) -> f64 {
        ((v - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0)
    }
}

/// Axis-aligned box of named parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    dims: Vec<Dim>,
}

impl ParamSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Invalid(
                "parameter space needs at least one dimension".into(),
            ));
        }
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::Invalid(format!(
                    "dimension {} has invalid bounds [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.kind == DimKind::Integer && (d.lower.fract() != 0.0 || d.upper.fract() != 0.0) {
                return Err(Error::Invalid(format!(
                    "integer dimension {} needs integral bounds",
                    d.name
                )));
            }
        }
        Ok(ParamSpace { dims })
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Maps a unit-cube point into the box, rounding integer dimensions.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(u)
            .map(|(d, &v)| d.value_at(v))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(x)
            .map(|(d, &v)| d.to_unit(v))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len()
            && self.dims.iter().zip(x).all(|(d, &v)| {
                v >= d.lower && v <= d.upper && (d.kind == DimKind::Continuous || v.fract() == 0.0)
            })
    }
}
