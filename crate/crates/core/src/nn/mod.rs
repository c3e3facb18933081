//! Dense network engine over flat parameter vectors.

mod arch;
mod engine;
mod metrics;
mod params;

pub use arch::{Activation, ArchSignature, ArchSpec, LayerLayout};
pub use engine::{
    cross_entropy, forward, forward_features, gradient, loss, loss_and_gradient, softmax, Batch,
};
pub use metrics::{
    accuracy, argmax_rows, evaluate, macro_f1, macro_recall, roc_auc_binary, roc_auc_ovr,
    score_logits, MetricKind,
};
pub use params::ParamVector;
