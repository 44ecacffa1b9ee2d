//! Graphical mean curvature flow of maps between Riemann surfaces.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod extrinsic;
pub mod flow;
pub mod mapfield;
pub mod oracle;
pub mod surface;
pub mod target;

pub use error::{Error, Result};
