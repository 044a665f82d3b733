//! Joint synthesis of tabular population records and activity-location
//! chains: a conditional GAN over encoded population rows, a recurrent
//! next-token model over location sequences, a Hungarian assignment that
//! fuses the two sampled datasets on origin proximity, and an evaluation
//! suite that scores the result against ground truth.

pub mod error;
pub mod fixture;
pub mod gan;
pub mod geo;
pub mod gradcheck;
pub mod matcher;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod schema;
pub mod seq;
pub mod transforms;

pub use error::{Error, Result};
