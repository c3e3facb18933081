//! Model generation: source pretraining, linear-probe warm start, grid fine-tuning,
//! and the cyclical-schedule fission of fine-tuned base models.

use rayon::prelude::*;
use serde::Serialize;

use super::checkpoint::{dataset_fingerprint, derive_id, score_all, Checkpoint, Lineage, Stage};
use super::config::{GridSpec, HyperConfig, ScheduleKind};
use super::train::{RunKind, StepLoop};
use crate::data::{AugmentLevel, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{ArchSpec, ParamVector};
use crate::optim::{cosine_lr, is_collection_point, CosineSchedule, CyclicalSchedule};

fn config_key(config: &HyperConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

fn cosine_steps(
    looper: &mut StepLoop<'_>,
    params: &mut ParamVector,
    base_lr: f64,
    epochs: usize,
) -> Result<()> {
    let total = looper.steps_per_epoch() * epochs as u64;
    let schedule = CosineSchedule::new(base_lr, epochs as f64);
    looper.run(params, total, |_, epoch| cosine_lr(epoch as f64, &schedule), |_, _| Ok(()))
}

/// Train a freshly initialized network on the source task.
pub fn pretrain_source(
    arch: &ArchSpec,
    source: &LabeledDataset,
    config: &HyperConfig,
) -> Result<Checkpoint> {
    config.validate()?;
    let mut params = ParamVector::init(arch, config.seed);
    let mut looper = StepLoop::new(
        arch,
        source,
        config.batch_size,
        config.augment,
        config.seed,
        RunKind::Pretrain,
        0..arch.param_count(),
        config.optimizer,
    )?;
    cosine_steps(&mut looper, &mut params, config.lr, config.epochs)?;
    let id = derive_id(
        Stage::Pretrained,
        &[
            &arch.signature().to_string(),
            &config_key(config),
            &format!("{:016x}", dataset_fingerprint(source)),
        ],
    );
    Ok(Checkpoint {
        id,
        arch: arch.clone(),
        params,
        config: Some(config.clone()),
        lineage: Lineage::new(Stage::Pretrained),
        val_metrics: Default::default(),
        epochs_consumed: config.epochs as f64,
    })
}

/// Train only the classifier head for `config.warmup_epochs` at a constant `config.lr`.
/// Every other parameter is left bit-for-bit untouched.
pub fn linear_probe_warmup(
    pretrained: &Checkpoint,
    train: &LabeledDataset,
    config: &HyperConfig,
) -> Result<Checkpoint> {
    config.validate()?;
    let arch = &pretrained.arch;
    pretrained.params.check_arch(arch)?;
    let mut params = pretrained.params.clone();
    let mut looper = StepLoop::new(
        arch,
        train,
        config.batch_size,
        config.augment,
        config.seed,
        RunKind::Warmup,
        arch.head_range(),
        config.optimizer,
    )?;
    let total = looper.steps_per_epoch() * config.warmup_epochs as u64;
    looper.run(&mut params, total, |_, _| Ok(config.lr), |_, _| Ok(()))?;
    let id = derive_id(
        Stage::Warmstart,
        &[
            &pretrained.id,
            &config_key(config),
            &format!("{:016x}", dataset_fingerprint(train)),
        ],
    );
    let mut lineage = Lineage::new(Stage::Warmstart);
    lineage.base_id = Some(pretrained.id.clone());
    lineage.root_id = Some(id.clone());
    Ok(Checkpoint {
        id,
        arch: arch.clone(),
        params,
        config: Some(config.clone()),
        lineage,
        val_metrics: Default::default(),
        epochs_consumed: config.warmup_epochs as f64,
    })
}

fn root_of(ckpt: &Checkpoint) -> String {
    ckpt.lineage.root_id.clone().unwrap_or_else(|| ckpt.id.clone())
}

fn fine_tune_as(
    theta0: &Checkpoint,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &HyperConfig,
    stage: Stage,
) -> Result<Checkpoint> {
    config.validate()?;
    if config.schedule != ScheduleKind::Cosine {
        return Err(Error::InvalidArgument(
            "fine-tuning runs use the cosine schedule".into(),
        ));
    }
    let arch = &theta0.arch;
    let mut params = theta0.params.clone();
    let mut looper = StepLoop::new(
        arch,
        train,
        config.batch_size,
        config.augment,
        config.seed,
        RunKind::FineTune,
        0..arch.param_count(),
        config.optimizer,
    )?;
    cosine_steps(&mut looper, &mut params, config.lr, config.epochs)?;
    let val_metrics = score_all(&params, arch, val)?;
    let id = derive_id(
        stage,
        &[
            &theta0.id,
            &config_key(config),
            &format!("{:016x}", dataset_fingerprint(train)),
            &format!("{:016x}", dataset_fingerprint(val)),
        ],
    );
    let mut lineage = Lineage::new(stage);
    lineage.base_id = Some(theta0.id.clone());
    lineage.root_id = Some(root_of(theta0));
    Ok(Checkpoint {
        id,
        arch: arch.clone(),
        params,
        config: Some(config.clone()),
        lineage,
        val_metrics,
        epochs_consumed: config.epochs as f64,
    })
}

/// Full fine-tuning from the warm start with per-epoch cosine annealing.
pub fn fine_tune(
    theta0: &Checkpoint,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &HyperConfig,
) -> Result<Checkpoint> {
    fine_tune_as(theta0, train, val, config, Stage::Grid)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunFailure {
    pub config: HyperConfig,
    pub error: String,
}

/// Result of a batch of independent runs; failed cells are reported, not dropped.
#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub failures: Vec<RunFailure>,
}

impl GridOutcome {
    pub fn into_result(self) -> Result<Vec<Checkpoint>> {
        match self.failures.first() {
            None => Ok(self.checkpoints),
            Some(f) => Err(Error::InvalidArgument(format!(
                "{} run(s) failed; first (lr={}): {}",
                self.failures.len(),
                f.config.lr,
                f.error
            ))),
        }
    }
}

fn run_all(
    theta0: &Checkpoint,
    configs: Vec<HyperConfig>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    stage: Stage,
) -> GridOutcome {
    let results: Vec<(HyperConfig, Result<Checkpoint>)> = configs
        .into_par_iter()
        .map(|c| {
            let r = fine_tune_as(theta0, train, val, &c, stage);
            (c, r)
        })
        .collect();
    let mut outcome = GridOutcome {
        checkpoints: Vec::new(),
        failures: Vec::new(),
    };
    for (config, r) in results {
        match r {
            Ok(c) => outcome.checkpoints.push(c),
            Err(e) => outcome.failures.push(RunFailure {
                config,
                error: e.to_string(),
            }),
        }
    }
    outcome
}

/// One fine-tuning run per grid cell, all from the same warm start.
pub fn grid_generate(
    theta0: &Checkpoint,
    grid: &GridSpec,
    train: &LabeledDataset,
    val: &LabeledDataset,
    template: &HyperConfig,
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid has no cells".into()));
    }
    Ok(run_all(theta0, grid.configs(template), train, val, Stage::Grid))
}

/// Base models for fission: one run per learning rate, with augmentation and seed fixed.
pub fn fgg_base_generate(
    theta0: &Checkpoint,
    lrs: &[f64],
    augment: AugmentLevel,
    seed: u64,
    train: &LabeledDataset,
    val: &LabeledDataset,
    template: &HyperConfig,
) -> Result<GridOutcome> {
    if lrs.is_empty() {
        return Err(Error::InvalidArgument("no learning rates given".into()));
    }
    let configs = lrs
        .iter()
        .map(|&lr| HyperConfig {
            lr,
            augment,
            seed,
            schedule: ScheduleKind::Cosine,
            ..template.clone()
        })
        .collect();
    Ok(run_all(theta0, configs, train, val, Stage::Base))
}

/// Optimizer steps needed to reach `n_collect` learning-rate minima:
/// `(n_collect - 1) * c + c / 2`.
pub fn fission_steps(n_collect: u32, cycle_len: u64) -> u64 {
    (n_collect as u64 - 1) * cycle_len + cycle_len / 2
}

#[derive(Clone, Debug)]
pub struct FissionOutcome {
    pub checkpoints: Vec<Checkpoint>,
    /// Step index (1-based) at which each checkpoint was captured.
    pub capture_steps: Vec<u64>,
    pub total_steps: u64,
    /// Set when training diverged before every collection was made.
    pub truncated: bool,
    pub error: Option<String>,
}

/// Continue training `base` under the cyclical schedule, capturing a checkpoint at
/// every learning-rate minimum. The optimizer state starts fresh.
pub fn fgg_fission(
    base: &Checkpoint,
    schedule: &CyclicalSchedule,
    n_collect: u32,
    train: &LabeledDataset,
    val: &LabeledDataset,
) -> Result<FissionOutcome> {
    if n_collect == 0 {
        return Err(Error::InvalidArgument("n_collect must be >= 1".into()));
    }
    let base_config = base.config.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no training config to continue from", base.id))
    })?;
    let arch = &base.arch;
    let mut looper = StepLoop::new(
        arch,
        train,
        base_config.batch_size,
        base_config.augment,
        base_config.seed,
        RunKind::Fission,
        0..arch.param_count(),
        base_config.optimizer,
    )?;
    let c = schedule.cycle_len();
    let total_steps = fission_steps(n_collect, c);
    let spe = looper.steps_per_epoch();
    let config = HyperConfig {
        schedule: ScheduleKind::Cyclical(*schedule),
        epochs: total_steps.div_ceil(spe) as usize,
        ..base_config.clone()
    };
    let train_fp = format!("{:016x}", dataset_fingerprint(train));
    let val_fp = format!("{:016x}", dataset_fingerprint(val));
    let root = root_of(base);

    let mut params = base.params.clone();
    let mut checkpoints = Vec::new();
    let mut capture_steps = Vec::new();
    let mut last_capture = 0u64;
    let result = looper.run(
        &mut params,
        total_steps,
        |i, _| schedule.lr(i),
        |i, p| {
            if !is_collection_point(i, c)? {
                return Ok(());
            }
            let cycle_index = checkpoints.len() as u32 + 1;
            let id = derive_id(
                Stage::Fission,
                &[
                    &base.id,
                    &config_key(&config),
                    &cycle_index.to_string(),
                    &train_fp,
                    &val_fp,
                ],
            );
            let lineage = Lineage {
                stage: Stage::Fission,
                base_id: Some(base.id.clone()),
                root_id: Some(root.clone()),
                cycle_index: Some(cycle_index),
            };
            checkpoints.push(Checkpoint {
                id,
                arch: arch.clone(),
                params: p.clone(),
                config: Some(config.clone()),
                lineage,
                val_metrics: score_all(p, arch, val)?,
                epochs_consumed: (i - last_capture) as f64 / spe as f64,
            });
            capture_steps.push(i);
            last_capture = i;
            Ok(())
        },
    );
    let (truncated, error) = match result {
        Ok(()) => (false, None),
        Err(e @ Error::Diverged { .. }) => (true, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(FissionOutcome {
        checkpoints,
        capture_steps,
        total_steps,
        truncated,
        error,
    })
}
