//! Depth estimation from lidar point clouds and from rectified stereo pairs.
//!
//! * [`geometry`]: quaternions, rigid frame changes, pinhole projection.
//! * [`lidar_depth`]: z-buffered rasterization, near-object spreading and
//!   inverse-distance depth completion.
//! * [`stereo`]: SAD block matching, semi-global aggregation, column
//!   padding and disparity/depth conversion.
//! * [`wls`]: guided weighted-least-squares disparity refinement.
//! * [`metrics`]: depth error reports, colorization and overlays.
//! * [`synth`]: synthetic scenes with exact ground truth.
//! * [`io`]: file formats.

pub mod colormap;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lidar_depth;
pub mod metrics;
pub mod stereo;
pub mod synth;
pub mod wls;

pub use error::{Error, Result};
