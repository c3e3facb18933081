//! Forward pass, softmax cross-entropy and backpropagation over flat parameter vectors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::arch::ArchSpec;
use super::params::ParamVector;
use crate::error::{Error, Result};

/// A minibatch of feature rows and their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "batch labels",
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        Ok(Batch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn layer_views<'a>(
    params: &'a ParamVector,
    arch: &ArchSpec,
) -> Vec<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)> {
    arch.layers()
        .into_iter()
        .map(|l| {
            let w = ArrayView2::from_shape((l.out_dim, l.in_dim), &params.values[l.weights])
                .expect("layout matches param count");
            let b = ArrayView1::from(&params.values[l.bias]);
            (w, b)
        })
        .collect()
}

fn check_inputs(params: &ParamVector, arch: &ArchSpec, features: &ArrayView2<f64>) -> Result<()> {
    params.check_arch(arch)?;
    if features.ncols() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "feature columns",
            expected: arch.input_dim(),
            found: features.ncols(),
        });
    }
    Ok(())
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

/// Pre-activations and activations of every layer, kept for backprop.
struct Trace {
    /// `inputs[l]` is the input to layer `l` (so `inputs[0]` is the batch).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn run_forward(params: &ParamVector, arch: &ArchSpec, features: ArrayView2<f64>) -> Trace {
    let layers = layer_views(params, arch);
    let last = layers.len() - 1;
    let act = arch.activation();
    let mut inputs = vec![features.to_owned()];
    let mut pre = Vec::with_capacity(last);
    for (idx, (w, b)) in layers.iter().enumerate() {
        let z = inputs[idx].dot(&w.t()) + b;
        if idx == last {
            return Trace {
                inputs,
                pre,
                logits: z,
            };
        }
        let a = z.mapv(|v| act.apply(v));
        pre.push(z);
        inputs.push(a);
    }
    unreachable!("architecture has at least one layer")
}

/// Logits `(rows, classes)` for a feature matrix.
pub fn forward_features(
    params: &ParamVector,
    arch: &ArchSpec,
    features: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_inputs(params, arch, &features)?;
    let logits = run_forward(params, arch, features).logits;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(logits)
}

pub fn forward(params: &ParamVector, arch: &ArchSpec, batch: &Batch) -> Result<Array2<f64>> {
    forward_features(params, arch, batch.features.view())
}

/// Row-wise softmax with the max-shift for stability.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean softmax cross-entropy over the batch.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: logits.nrows(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(labels, logits.ncols())?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let shifted_lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            (shifted_lse - (row[y] - max)).max(0.0)
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean loss and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    params: &ParamVector,
    arch: &ArchSpec,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    check_inputs(params, arch, &batch.features.view())?;
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(&batch.labels, arch.class_count())?;

    let trace = run_forward(params, arch, batch.features.view());
    let loss = cross_entropy(trace.logits.view(), &batch.labels)?;

    let n = batch.len() as f64;
    let mut delta = softmax(trace.logits.view());
    for (mut row, &y) in delta.axis_iter_mut(Axis(0)).zip(&batch.labels) {
        row[y] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }

    let layers = arch.layers();
    let views = layer_views(params, arch);
    let act = arch.activation();
    let mut grad = vec![0.0; arch.param_count()];

    for idx in (0..layers.len()).rev() {
        let layout = &layers[idx];
        let dw = delta.t().dot(&trace.inputs[idx]);
        let db: Array1<f64> = delta.sum_axis(Axis(0));
        // `dot` may hand back a column-major result; iterate in logical order
        for (g, &v) in grad[layout.weights.clone()].iter_mut().zip(dw.iter()) {
            *g = v;
        }
        for (g, &v) in grad[layout.bias.clone()].iter_mut().zip(db.iter()) {
            *g = v;
        }
        if idx > 0 {
            let upstream = delta.dot(&views[idx].0);
            let z = &trace.pre[idx - 1];
            let a = &trace.inputs[idx];
            let mut next = upstream;
            ndarray::Zip::from(&mut next)
                .and(z)
                .and(a)
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            delta = next;
        }
    }

    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((
        loss,
        ParamVector {
            values: grad,
            arch_signature: params.arch_signature,
        },
    ))
}

pub fn gradient(params: &ParamVector, arch: &ArchSpec, batch: &Batch) -> Result<ParamVector> {
    loss_and_gradient(params, arch, batch).map(|(_, g)| g)
}

pub fn loss(params: &ParamVector, arch: &ArchSpec, batch: &Batch) -> Result<f64> {
    let logits = forward(params, arch, batch)?;
    cross_entropy(logits.view(), &batch.labels)
}
