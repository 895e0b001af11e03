//! SimBlocks, the classifier stack and its training loop.
//!
//! A model is a list of blocks separated by 2× average pooling. Each block
//! estimates one geometry field from the channel mean of its input and
//! applies its SimConv layers (each followed by a rectifier) under that
//! field. The head takes the global spatial maximum of every channel and
//! maps it to logits with one affine layer.

mod io;
mod model;
mod train;

pub use io::{load_model, save_model, Manifest, MANIFEST_SCHEMA};
pub use model::{
    avgpool2, avgpool2_backward, global_max, simblock_forward, Architecture, GeometryMode,
    Gradients, Linear, SimBlock, SrenModel, Trace,
};
pub use train::{
    evaluate, evaluate_with, softmax_cross_entropy, train, Adam, EpochMetrics, Evaluation,
    Precision, TrainConfig, TrainReport,
};
