//! Finding and predicting the most compressible rotation of a 360° video
//! stored as a packed cubemap.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod predictor;
pub mod projection;
pub mod scenes;

pub use error::{Error, Result};
