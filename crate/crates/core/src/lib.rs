//! Tile-based two-stage image classification.
//!
//! An input image is cut into fixed-size tiles. A binary classifier marks
//! each tile as skin or non-skin, then a seven-way classifier labels every
//! skin tile as one of six lesion types or normal skin. The per-image
//! result is the proportion of skin tiles in each class.
//!
//! Modules:
//!
//! - [`numerics`]: tensors, seeded RNG, data-parallel helpers, gradient checking.
//! - [`augment`]: center-anchored affine augmentation and flips.
//! - [`network`]: layers, the three reference architectures, training, weight files.
//! - [`eval`]: ROC/AUC, Youden's index, confusion matrices.
//! - [`pipeline`]: tiling, skin masks and diagnosis reports.
//! - [`datagen`]: corpus ingestion and synthetic texture corpora.
//! - [`cli`]: the `tilepath` command-line front end.

pub mod augment;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod image;
pub mod network;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
pub use image::Image;
