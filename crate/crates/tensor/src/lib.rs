//! Dense `f64` tensors with a dynamic reverse-mode tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Parameters live in a
//! [`ParamStore`] and are bound onto the tape through a [`Graph`], which
//! also carries the train/eval mode and collects batch-norm buffer updates.

mod error;
pub mod gradcheck;
pub mod matn;
mod ops;
mod params;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::conv::conv_extent;
pub use ops::elementwise::sigmoid;
pub use ops::norm::{BnMode, BnStats};
pub use params::{Graph, ParamEntry, ParamId, ParamKind, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
