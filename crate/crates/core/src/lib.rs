//! Polytopic autoencoders and POD baselines for reduced-order models of quadratic systems.

pub mod clustering;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod lpv;
pub mod net;
pub mod pae;
pub mod polytope;
pub mod storage;

pub use error::{Error, Result};
