//! Langevin data augmentation: pairwise energy-based models trained by
//! contrastive divergence, Langevin iterates as augmentation data for a toy
//! segmenter, and a numerical harness for the GLM regularization theory.

pub mod cd;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod io;
pub mod langevin;
pub mod nn;
pub mod numerics;
pub mod pca;
pub mod pipeline;
pub mod seg;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
