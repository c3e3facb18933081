//! AdamW and learning-rate schedules.

mod adamw;
mod schedule;

pub use adamw::{AdamWConfig, AdamWState};
pub use schedule::{
    cosine_lr, cyclical_alpha, cyclical_t, is_collection_point, CosineSchedule, CyclicalSchedule,
};
