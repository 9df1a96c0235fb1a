//! Unpaired depth super-resolution.
//!
//! The crate covers the full desk-scale pipeline: depth/RGB rasters and
//! metrics, a small reverse-mode autodiff engine, the translation and
//! enhancement networks with their losses, the training phases, and a
//! synthetic RGB-D data generator with a scene-disjoint split framework.

pub mod autodiff;
pub mod datagen;
pub mod depth;
pub mod gradsuite;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod training;
mod error;

pub use error::{Error, Result};
