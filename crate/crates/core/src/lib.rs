//! Synthesis of paired depth and thermal frames from RGB frames of people.
//!
//! The pipeline picks a matching empty-scene background by embedding
//! similarity, conditions a translation backend on the masked person crop,
//! the background crop and a normalized interior distance field, and blends
//! the translated person back into the background. Quality metrics (MSE,
//! FID, KID) and classification scores cover evaluation.

pub mod composite;
pub mod embed;
mod error;
pub mod fixture;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod retrieval;
pub mod translation;

pub use error::{Error, Result};
pub use par::Execution;
