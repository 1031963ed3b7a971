//! Self-attention with question-conditioned modulation inside residual
//! convolutional networks, plus the synthetic VQA data, training loop and
//! placement sweep used to study it at desk scale.

pub mod attention;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod encoder;
mod error;
pub mod init;
pub mod model;
pub mod modulation;
pub mod plan;
pub mod train;

pub use error::{Error, Result};
