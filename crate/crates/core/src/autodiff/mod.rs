//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod checkpoint;
pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, ManifestEntry,
    CHECKPOINT_MAGIC,
};
pub use graph::{Graph, Var};
pub(crate) use graph::sigmoid;
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
