//! Tensor product decomposition networks (TPDNs) fitted to the encodings
//! of small GRU sequence-to-sequence models trained on digit tasks.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod optim;
pub mod params;
pub mod roles;
pub mod sequences;
pub mod scalar;
pub mod seq2seq;
pub mod tensor;
pub mod tpdn;
pub mod training;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// 64-bit tensor, the precision used throughout the pipeline.
pub type Tensor = tensor::Tensor<f64>;
pub type Graph = autodiff::Graph<f64>;
pub type ParamStore = params::ParamStore<f64>;
pub type AdamState = optim::AdamState<f64>;
