use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("conv2d: input {input:?} with kernel {kernel:?}, stride {stride}, pad {pad} has no valid output extent")]
    ConvGeometry {
        input: Vec<usize>,
        kernel: Vec<usize>,
        stride: usize,
        pad: usize,
    },

    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("{0}")]
    Invalid(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
