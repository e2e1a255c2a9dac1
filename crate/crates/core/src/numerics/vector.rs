//! Finite f64 vectors with the handful of operations the lab needs.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, CoreError, Result};

/// A dense f64 vector whose entries are guaranteed finite.
///
/// The guarantee is established at construction and preserved by every
/// operation that returns a new vector; operations that could overflow check
/// their output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealVector(Vec<f64>);

impl RealVector {
    /// Builds a vector, rejecting NaN/infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure_finite(&values, "RealVector::new")?;
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other, "RealVector::dot")?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_len(other, "RealVector::add")?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other, "RealVector::sub")?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|a| a * s).collect())
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Euclidean distance to `other`.
    pub fn dist(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    fn check_len(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(CoreError::ShapeMismatch {
                context,
                expected: self.len().to_string(),
                actual: other.len().to_string(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for RealVector {
    type Error = CoreError;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(v: RealVector) -> Vec<f64> {
        v.0
    }
}

impl std::ops::Index<usize> for RealVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
