use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{augment, AugmentLevel, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{loss_and_gradient, ArchSpec, ParamVector};
use crate::optim::AdamWState;

/// Random-stream ids so that each stage of one seed shuffles independently.
#[derive(Clone, Copy, Debug)]
pub(crate) enum RunKind {
    Pretrain = 1,
    Warmup = 2,
    FineTune = 3,
    Fission = 4,
}

/// Minibatch AdamW loop over a dataset, reshuffled every epoch.
pub(crate) struct StepLoop<'a> {
    arch: &'a ArchSpec,
    train: &'a LabeledDataset,
    batch_size: usize,
    augment: AugmentLevel,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    trainable: Range<usize>,
    opt: AdamWState,
    kind: RunKind,
}

impl<'a> StepLoop<'a> {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        arch: &'a ArchSpec,
        train: &'a LabeledDataset,
        batch_size: usize,
        augment: AugmentLevel,
        seed: u64,
        kind: RunKind,
        trainable: Range<usize>,
        optimizer: crate::optim::AdamWConfig,
    ) -> Result<Self> {
        if train.dim() != arch.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "training features",
                expected: arch.input_dim(),
                found: train.dim(),
            });
        }
        if train.class_count > arch.class_count() {
            return Err(Error::DimensionMismatch {
                what: "class count",
                expected: arch.class_count(),
                found: train.class_count,
            });
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(kind as u64);
        let opt = AdamWState::new(trainable.len(), optimizer)?;
        Ok(StepLoop {
            arch,
            train,
            batch_size,
            augment,
            rng,
            order: (0..train.len()).collect(),
            trainable,
            opt,
            kind,
        })
    }

    pub(crate) fn steps_per_epoch(&self) -> u64 {
        self.train.len().div_ceil(self.batch_size) as u64
    }

    fn diverged(&self, step: u64, loss: f64) -> Error {
        let stage = format!("{:?}", self.kind).to_lowercase();
        Error::Diverged { stage, step, loss }
    }

    /// Runs steps `1..=total_steps`. `lr_at(i, epoch)` gives the rate for step `i`;
    /// `after(i, params)` sees the parameters once step `i` is applied.
    pub(crate) fn run(
        &mut self,
        params: &mut ParamVector,
        total_steps: u64,
        mut lr_at: impl FnMut(u64, u64) -> Result<f64>,
        mut after: impl FnMut(u64, &ParamVector) -> Result<()>,
    ) -> Result<()> {
        params.check_arch(self.arch)?;
        let spe = self.steps_per_epoch();
        let n = self.train.len();
        for i in 1..=total_steps {
            let pos = ((i - 1) % spe) as usize;
            if pos == 0 {
                self.order.shuffle(&mut self.rng);
            }
            let idx = &self.order[pos * self.batch_size..((pos + 1) * self.batch_size).min(n)];
            let batch = augment(&self.train.batch(idx), self.augment, &mut self.rng);
            let (loss, grad) = match loss_and_gradient(params, self.arch, &batch) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(self.diverged(i, f64::NAN)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(self.diverged(i, loss));
            }
            let lr = lr_at(i, (i - 1) / spe)?;
            let range = self.trainable.clone();
            self.opt
                .step(&mut params.values[range.clone()], &grad.values[range], lr)?;
            if !params.is_finite() {
                return Err(self.diverged(i, loss));
            }
            after(i, params)?;
        }
        Ok(())
    }
}
