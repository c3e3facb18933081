use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Activation, ArchSignature, ArchSpec};
use crate::error::{Error, Result};

/// Flat model weights tagged with the signature of the architecture they belong to.
///
/// Layout per layer: row-major `(out_dim, in_dim)` weight matrix, then the bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub arch_signature: ArchSignature,
}

impl ParamVector {
    pub fn from_values(arch: &ArchSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: arch.param_count(),
                found: values.len(),
            });
        }
        Ok(ParamVector {
            values,
            arch_signature: arch.signature(),
        })
    }

    pub fn zeros(arch: &ArchSpec) -> Self {
        ParamVector {
            values: vec![0.0; arch.param_count()],
            arch_signature: arch.signature(),
        }
    }

    /// Seeded random initialization: He-uniform for ReLU nets, Glorot-uniform for tanh;
    /// biases start at zero.
    pub fn init(arch: &ArchSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; arch.param_count()];
        for layer in arch.layers() {
            let bound = match arch.activation() {
                Activation::Relu => (6.0 / layer.in_dim as f64).sqrt(),
                Activation::Tanh => (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt(),
            };
            for w in &mut values[layer.weights] {
                *w = rng.random_range(-bound..bound);
            }
        }
        ParamVector {
            values,
            arch_signature: arch.signature(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_arch(&self, arch: &ArchSpec) -> Result<()> {
        if self.arch_signature != arch.signature() {
            return Err(Error::SignatureMismatch {
                expected: arch.signature(),
                found: self.arch_signature,
            });
        }
        if self.values.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: arch.param_count(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.arch_signature != other.arch_signature {
            return Err(Error::SignatureMismatch {
                expected: self.arch_signature,
                found: other.arch_signature,
            });
        }
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `lambda * self + (1 - lambda) * other`, coordinate by coordinate.
    pub fn lerp(&self, other: &ParamVector, lambda: f64) -> Result<ParamVector> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Ok(ParamVector {
            values,
            arch_signature: self.arch_signature,
        })
    }

    pub fn sub(&self, other: &ParamVector) -> Result<Vec<f64>> {
        self.check_compatible(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn l2_distance(&self, other: &ParamVector) -> Result<f64> {
        Ok(self.sub(other)?.iter().map(|d| d * d).sum::<f64>().sqrt())
    }
}
