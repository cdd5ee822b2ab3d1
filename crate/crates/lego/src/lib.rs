//! Modular content-based recommendation engine.
//!
//! Models are assembled from three interchangeable components:
//!   - content operators encode an item's tokens (or bare id) into an
//!     embedding (`content`)
//!   - behavior operators fuse the user's history into a user representation
//!     (`behavior`)
//!   - click predictors score candidates against that representation
//!     (`predictor`)
//!
//! The pieces compose through a registry (`config`), train jointly under
//! matching or ranking objectives (`model`, `train`), and evaluate through an
//! embedding-caching pipeline (`model`, `metrics`) that precomputes item and
//! user representations so inference only runs the predictor.
//!
//! Everything sits on a small dense-tensor engine with reverse-mode autodiff
//! (`tensor`), generic over `f32` (training, benchmarks) and `f64`
//! (finite-difference gradient checks).

pub mod behavior;
pub mod cli;
pub mod config;
pub mod content;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod predictor;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
