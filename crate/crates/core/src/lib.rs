//! Micro deep-learning engine for spatial-temporal lane detection.
//!
//! Rank-4 tensors with a reverse-mode tape, SCNN message passing, ConvLSTM and
//! ConvGRU cells, UNet/SegNet sequence-to-one models, and the training and
//! evaluation harness around them.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod kv;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use mask::Mask;
pub use params::{ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Shape, Tensor};

/// Seeded generator used for every random draw in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;
