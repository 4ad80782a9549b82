//! Familiarity-based visual route navigation.
//!
//! A route is learned in one pass as a list of snapshots. Heading is then
//! recovered by scanning: each live view is compared against every stored
//! snapshot with the image difference function, and the most familiar
//! direction is the one with the lowest difference.

pub mod error;
pub mod evalharness;
pub mod imgproc;
pub mod nav;
pub mod route;
pub mod store;

pub use error::{Error, Result};
