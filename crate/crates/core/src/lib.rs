//! Glass segmentation with a wide, shallow backbone of chained encoder-decoder
//! capturing units, cross transpose attention, and a Fourier convolution
//! controller, on top of a small self-contained tensor and autodiff core.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); training, data
//! handling and checkpoints use `f32`.

pub mod autodiff;
pub mod boundary;
pub mod data;
pub mod error;
pub mod fourier;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{Shape, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
