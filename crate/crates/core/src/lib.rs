//! Saliency prediction with a deep spatial contextual LSTM.
//!
//! Local convolutional features are swept by bidirectional LSTMs along rows
//! and then columns, so every grid cell sees the whole image; a global scene
//! vector is injected at the first step of each scan. A 1×1 convolution,
//! map-wide softmax and fixed bilinear upsampling produce the saliency map,
//! trained against eye fixations with negative NSS.

pub mod encoders;
pub mod error;
pub mod gradsuite;
pub mod layers;
pub mod lstm;
pub mod metrics;
pub mod numerics;
pub mod params;
pub mod spatial;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Tensor;
pub use params::Params;
