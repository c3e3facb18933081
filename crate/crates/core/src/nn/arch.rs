use std::fmt;
use std::hash::Hasher;
use std::ops::Range;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    #[inline]
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Content hash of an architecture. Two specs with equal dims and activation
/// always share a signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ArchSignature(pub u64);

impl fmt::Display for ArchSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl From<ArchSignature> for String {
    fn from(sig: ArchSignature) -> Self {
        sig.to_string()
    }
}

impl TryFrom<String> for ArchSignature {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        u64::from_str_radix(&s, 16)
            .map(ArchSignature)
            .map_err(|e| format!("bad signature {s:?}: {e}"))
    }
}

/// Index ranges of one dense layer inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)` weight block.
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

/// A dense feed-forward classifier: `layer_dims = [input, hidden..., classes]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArch", into = "RawArch")]
pub struct ArchSpec {
    layer_dims: Vec<usize>,
    activation: Activation,
    signature: ArchSignature,
}

#[derive(Serialize, Deserialize)]
struct RawArch {
    layer_dims: Vec<usize>,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signature: Option<ArchSignature>,
}

impl TryFrom<RawArch> for ArchSpec {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        let arch = ArchSpec::new(raw.layer_dims, raw.activation)?;
        match raw.signature {
            Some(sig) if sig != arch.signature => Err(Error::SignatureMismatch {
                expected: sig,
                found: arch.signature,
            }),
            _ => Ok(arch),
        }
    }
}

impl From<ArchSpec> for RawArch {
    fn from(arch: ArchSpec) -> Self {
        RawArch {
            signature: Some(arch.signature),
            layer_dims: arch.layer_dims,
            activation: arch.activation,
        }
    }
}

impl ArchSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArch(format!(
                "need at least input and output dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArch(format!(
                "all layer dims must be >= 1, got {layer_dims:?}"
            )));
        }
        let signature = Self::compute_signature(&layer_dims, activation);
        Ok(ArchSpec {
            layer_dims,
            activation,
            signature,
        })
    }

    /// Convenience constructor from input dim, hidden widths and class count.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, activation: Activation) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(classes);
        Self::new(dims, activation)
    }

    fn compute_signature(dims: &[usize], activation: Activation) -> ArchSignature {
        let mut h = FnvHasher::default();
        h.write(b"dense-mlp/v1");
        h.write(&(dims.len() as u64).to_le_bytes());
        for &d in dims {
            h.write(&(d as u64).to_le_bytes());
        }
        h.write(&[activation.tag()]);
        ArchSignature(h.finish())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn signature(&self) -> ArchSignature {
        self.signature
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let (in_dim, out_dim) = (w[0], w[1]);
                let weights = offset..offset + in_dim * out_dim;
                let bias = weights.end..weights.end + out_dim;
                offset = bias.end;
                LayerLayout {
                    in_dim,
                    out_dim,
                    weights,
                    bias,
                }
            })
            .collect()
    }

    /// Range covering the final layer's weights and bias (the classifier head).
    pub fn head_range(&self) -> Range<usize> {
        let last = self.layers().pop().expect("at least one layer");
        last.weights.start..last.bias.end
    }
}
