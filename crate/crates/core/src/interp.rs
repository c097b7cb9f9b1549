//! Embedding algebra for slider-style intensity control.
//!
//! A direction is the residual between a target-expression embedding and the
//! neutral one; conditioning at intensity α walks `α` units along it. Values
//! above 1 extrapolate. Embeddings are opaque here and never normalized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::DEFAULT_ALPHA_MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("alpha {alpha} outside [0, {alpha_max}]")]
    AlphaOutOfRange { alpha: f64, alpha_max: f64 },
    #[error("embedding must be non-empty with finite entries")]
    Invalid,
}

/// Fixed-length real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, InterpError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(InterpError::Invalid);
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = InterpError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

/// Residual `e_tgt - e_neu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Range guard for intensity coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRange {
    pub alpha_max: f64,
}

impl Default for AlphaRange {
    fn default() -> Self {
        AlphaRange { alpha_max: DEFAULT_ALPHA_MAX }
    }
}

impl AlphaRange {
    pub fn new(alpha_max: f64) -> Self {
        AlphaRange { alpha_max }
    }

    pub fn check(&self, alpha: f64) -> Result<(), InterpError> {
        if (0.0..=self.alpha_max).contains(&alpha) {
            Ok(())
        } else {
            Err(InterpError::AlphaOutOfRange { alpha, alpha_max: self.alpha_max })
        }
    }
}

fn same_dim(a: usize, b: usize) -> Result<(), InterpError> {
    if a == b {
        Ok(())
    } else {
        Err(InterpError::DimMismatch(a, b))
    }
}

pub fn residual_direction(e_neu: &Embedding, e_tgt: &Embedding) -> Result<Direction, InterpError> {
    same_dim(e_neu.dim(), e_tgt.dim())?;
    Ok(Direction(e_tgt.0.iter().zip(&e_neu.0).map(|(t, n)| t - n).collect()))
}

/// `e_neu + alpha * d`.
pub fn interpolate(
    e_neu: &Embedding,
    d: &Direction,
    alpha: f64,
    range: AlphaRange,
) -> Result<Embedding, InterpError> {
    same_dim(e_neu.dim(), d.dim())?;
    range.check(alpha)?;
    Ok(Embedding(e_neu.0.iter().zip(&d.0).map(|(e, di)| e + alpha * di).collect()))
}

/// `e_neu + Σ alpha_i * d_i`, summed in list order.
pub fn blend(
    e_neu: &Embedding,
    terms: &[(Direction, f64)],
    range: AlphaRange,
) -> Result<Embedding, InterpError> {
    for (d, alpha) in terms {
        same_dim(e_neu.dim(), d.dim())?;
        range.check(*alpha)?;
    }
    let mut out = e_neu.0.clone();
    for (d, alpha) in terms {
        for (o, di) in out.iter_mut().zip(&d.0) {
            *o += alpha * di;
        }
    }
    Ok(Embedding(out))
}
