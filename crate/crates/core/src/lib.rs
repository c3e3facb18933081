pub mod analysis;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod soup;
pub mod store;

pub use error::{Error, Result};
