//! Embedding vectors and the similarity arithmetic used for ranking.
//!
//! A "CLIP score" throughout this crate is plain cosine similarity between
//! unit-normalized embeddings. Consumers only ever use the induced ordering
//! (argmin for outlier filtering, descending sort for keyframes), so no
//! rescaling or clipping at zero is applied.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ZERO_NORM: f64 = 1e-12;

/// A dense embedding. Values are always finite and the vector is never empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("dimension must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value at position {i}"
            )));
        }
        Ok(Self { values })
    }

    /// Widens 32-bit values (the at-rest precision) into an embedding.
    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.dot_unchecked(self).sqrt()
    }

    /// Returns a copy scaled to unit L2 norm.
    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / norm).collect(),
        })
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.dot_unchecked(other))
    }

    fn dot_unchecked(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        Embedding::new(values).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Cosine similarity, clamped to [-1, 1].
///
/// The result is symmetric bit-for-bit: the products are summed in the same
/// order whichever argument comes first, and the norm product commutes.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let cos = a.dot_unchecked(b) / (na * nb);
    Ok(cos.clamp(-1.0, 1.0))
}
