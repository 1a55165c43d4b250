//! Zero-shot phonemic transcription on articulatory attributes.

pub mod catalog;
pub mod config;
pub mod ctc;
pub mod data;
pub mod encoder;
pub mod model;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod scalar;
pub mod signature;
pub mod training;
pub mod xsampa;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type used by the CLI and the concrete aliases below.
pub type Mat64 = numerics::Mat<f64>;
pub type Mat32 = numerics::Mat<f32>;
