//! Road free-space detection from a monocular camera and a sparse point cloud.
//!
//! A road plane and box obstacles fitted to the cloud are ray cast into the
//! image as per-pixel priors, combined with segmentation probabilities and a
//! color-lines smoothness term in a binary CRF, and solved exactly by graph
//! cut. Road pixels are then back-projected onto the plane.

pub mod color_lines;
pub mod crf;
pub mod error;
pub mod eval;
pub mod exec;
pub mod freespace;
pub mod geom3d;
pub mod io;
pub mod obstacles;
pub mod pipeline;
pub mod plane_fit;
pub mod priors;
pub mod raster;
pub mod scenegen;

pub use error::{Error, Result};
pub use exec::Execution;
