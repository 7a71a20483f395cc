//! Interval maps with two indifferent fixed points.

// `!(a > b)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod error;
pub mod fit;
pub mod induced;
pub mod map;
pub mod measure;
pub mod observable;
pub mod params;
pub mod partition;
pub mod point;
pub mod roots;
pub mod sampler;
pub mod statistics;

pub use error::{Error, Result};
pub use map::MapModel;
pub use params::{MapParams, RegimeReport};
pub use point::{BranchId, Point};
