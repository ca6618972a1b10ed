//! Crack detection and pixel-level crack segmentation toolkit.
//!
//! The crate covers the full pipeline: dataset ingestion and patch
//! preparation (`dataio`), a patch-level crack/non-crack classifier
//! (`detect`), the multi-scale side-output segmentation network (`seg`),
//! the class-balanced multi-level loss (`loss`), the training loop
//! (`train`), and the evaluation metrics with guided-filter refinement
//! (`eval`).

pub mod ckpt;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod loss;
pub mod nn;
pub mod seg;
pub mod train;
pub mod plane;
pub mod synthetic;

pub use error::{Error, Result};
pub use plane::{MaskPlane, ProbabilityPlane};
