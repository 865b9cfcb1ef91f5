//! Time-domain enclosure method: detection and ranging of an obstacle
//! hidden behind a known sound-hard obstacle from a single back-scattered
//! wave recorded on a small ball.

pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod elliptic;
pub mod grid;
pub mod heatkernel;
pub mod indicator;
pub(crate) mod multigrid;
pub(crate) mod stencil;
pub mod wavesim;

pub use stencil::ObstacleBc;
