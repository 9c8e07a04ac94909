//! Multivariate analysis pipeline for Brillouin hyperspectral imaging.
//!
//! The crate covers the full workflow from raw hyperspectral cubes to
//! images: spectrum conditioning, per-pixel Lorentzian fitting with quality
//! gating, PCA/VCA spectral unmixing, linear discriminant classification,
//! hierarchical and k-means segmentation under several distance metrics,
//! a-priori-weighted clustering that fuses a co-registered intensity image
//! into the distance computation, synthetic ground-truth generators, and
//! PPM rendering of the resulting maps.

pub mod classify;
pub mod cluster;
pub mod decompose;
pub mod error;
pub mod fitting;
pub mod hsdata;
pub mod numerics;
pub mod preprocess;
pub mod render;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use hsdata::{FloatGrid, FreqAxis, HyperCube, LabelMap};
pub use numerics::Mat;
