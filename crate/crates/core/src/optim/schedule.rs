//! Learning-rate schedules: per-epoch cosine annealing and the triangular cyclical
//! schedule used to spawn checkpoints at each learning-rate minimum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Triangular cyclical schedule over optimizer steps.
///
/// Within each cycle of `cycle_len` steps the rate falls linearly from `alpha1` to
/// `alpha2` at mid-cycle, then climbs back to `alpha1` at the cycle's last step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCyclical")]
pub struct CyclicalSchedule {
    cycle_len: u64,
    alpha1: f64,
    alpha2: f64,
}

#[derive(Deserialize)]
struct RawCyclical {
    cycle_len: u64,
    alpha1: f64,
    alpha2: f64,
}

impl TryFrom<RawCyclical> for CyclicalSchedule {
    type Error = Error;

    fn try_from(raw: RawCyclical) -> Result<Self> {
        CyclicalSchedule::new(raw.cycle_len, raw.alpha1, raw.alpha2)
    }
}

impl CyclicalSchedule {
    pub fn new(cycle_len: u64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if cycle_len == 0 || cycle_len % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "cycle length must be a positive even number, got {cycle_len}"
            )));
        }
        if !(alpha2 > 0.0) || !alpha1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rates must be positive and finite, got ({alpha1}, {alpha2})"
            )));
        }
        if alpha2 > alpha1 {
            return Err(Error::InvalidArgument(format!(
                "minimum rate {alpha2} exceeds maximum rate {alpha1}"
            )));
        }
        Ok(CyclicalSchedule {
            cycle_len,
            alpha1,
            alpha2,
        })
    }

    /// Cycle length expressed in epochs of `steps_per_epoch` optimizer steps.
    pub fn from_epochs(
        steps_per_epoch: u64,
        epochs_per_cycle: u64,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        Self::new(steps_per_epoch * epochs_per_cycle, alpha1, alpha2)
    }

    pub fn cycle_len(&self) -> u64 {
        self.cycle_len
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn lr(&self, i: u64) -> Result<f64> {
        cyclical_alpha(i, self)
    }
}

fn check_iteration(i: u64, c: u64) -> Result<()> {
    if i < 1 {
        return Err(Error::InvalidArgument("iterations are numbered from 1".into()));
    }
    if c == 0 || c % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "cycle length must be a positive even number, got {c}"
        )));
    }
    Ok(())
}

/// Position within the current cycle, `(mod(i - 1, c) + 1) / c`, in `(0, 1]`.
pub fn cyclical_t(i: u64, c: u64) -> Result<f64> {
    check_iteration(i, c)?;
    Ok(((i - 1) % c + 1) as f64 / c as f64)
}

pub fn cyclical_alpha(i: u64, schedule: &CyclicalSchedule) -> Result<f64> {
    let t = cyclical_t(i, schedule.cycle_len)?;
    let (a1, a2) = (schedule.alpha1, schedule.alpha2);
    Ok(if t <= 0.5 {
        a2 * (2.0 * t) + a1 * (1.0 - 2.0 * t)
    } else {
        a1 * (2.0 * t - 1.0) + a2 * (2.0 - 2.0 * t)
    })
}

/// True at the mid-cycle step where the rate bottoms out at `alpha2`.
pub fn is_collection_point(i: u64, c: u64) -> Result<bool> {
    check_iteration(i, c)?;
    Ok((i - 1) % c + 1 == c / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub total_epochs: f64,
    #[serde(default)]
    pub min_lr: f64,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_epochs: f64) -> Self {
        CosineSchedule {
            base_lr,
            total_epochs,
            min_lr: 0.0,
        }
    }
}

pub fn cosine_lr(epoch: f64, schedule: &CosineSchedule) -> Result<f64> {
    if !(epoch >= 0.0 && epoch <= schedule.total_epochs) {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside [0, {}]",
            schedule.total_epochs
        )));
    }
    let CosineSchedule {
        base_lr,
        total_epochs,
        min_lr,
    } = *schedule;
    if total_epochs == 0.0 {
        return Ok(base_lr);
    }
    Ok(min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (PI * epoch / total_epochs).cos()))
}
