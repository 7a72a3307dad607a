//! Level-1 limit order book laboratory: the six-stream imbalance-driven
//! queue model, its diffusion limit, the up-move probability, quote-data
//! statistics and the hidden-liquidity fit.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod error;
pub mod estimate;
pub mod fit;
pub mod model;
pub mod sim;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
