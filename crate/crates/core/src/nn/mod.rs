//! Dense-tensor neural network stack with hand-derived backpropagation.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod serialize;
pub mod tensor;
pub mod weights;

pub use adam::Adam;
pub use graph::{GraphBuilder, LayerSpec, Mode, ModelGraph, NodeGrads, Source, Trace};
pub use layers::Padding;
pub use tensor::{Float, Tensor};
pub use weights::WeightStore;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("missing parameter {0:?}")]
    MissingParameter(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("not a DYSW weight file")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("declared shape does not match payload: {0}")]
    ShapeOverflow(String),
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
