//! Differentiable components: an autodiff tape over f64 tensors, the
//! denoiser network, text/image encoders with contrastive pretraining, and
//! the progression pair classifier.

pub mod attention;
pub mod checkpoint;
pub mod classifier;
pub mod clip;
pub mod conv;
pub mod denoiser;
pub mod encoders;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use tape::{Graph, Var};
pub use tensor::Tensor;
