//! Forward-only VIS+IR fusion networks.
//!
//! Every topology shares the same skeleton: a five-stage convolutional
//! backbone per modality (or a shared one), feature maps from stages 3 to 5
//! upsampled to a quarter of the input resolution and L2-normalized, then a
//! detection head producing the center, scale and offset maps. Topologies
//! differ only in where and how the two modalities meet. Weights are random;
//! the point is the wiring, its shapes and its parameter budget.

mod graph;
mod ops;
mod tensor;

pub use graph::{
    BackboneSpec, FusionGraph, GraphSummary, LayerSummary, StageSpec, Topology, TraceEntry,
    DEFAULT_HEAD_CHANNELS, L2_SCALE_INIT,
};
pub use ops::{clone_input_conv, conv2d, l2_normalize, nin_fuse, upsample, ConvLayer, Padding, L2_EPSILON};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("tensor must have positive dimensions")]
    EmptyTensor,
    #[error("tensor data length {found} does not match shape ({expected})")]
    DataLength { expected: usize, found: usize },
    #[error("expected {expected} channels, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("spatial size {left:?} does not match {right:?}")]
    SpatialMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("tensor shape {left:?} does not match {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("upsampling factor {0} is not supported (use 2 or 4)")]
    UnsupportedFactor(usize),
    #[error("input size {height}x{width} is not divisible by 16")]
    Indivisible { height: usize, width: usize },
    #[error("invalid layer: {0}")]
    InvalidLayer(&'static str),
    #[error("invalid backbone spec: {0}")]
    InvalidSpec(&'static str),
    #[error("unknown topology `{0}`")]
    UnknownTopology(alloc::string::String),
    #[error("operation not available for topology {0}")]
    Unsupported(&'static str),
}
