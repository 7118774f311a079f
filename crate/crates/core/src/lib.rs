//! Spatial statistics for geo-referenced firm data.
//!
//! This crate is `no_std` (it needs `alloc`) and holds the numerical core:
//! grid geometry, kernel density estimation, local Moran's I with
//! conditional-permutation inference, significant-cluster extraction and
//! their dendrogram, density comparisons, industry concentration metrics,
//! land-use adherence and street-survey tooling.
//!
//! IO, file formats, the synthetic city generator and the CLI live in the
//! `firmscape` companion crate.

#![no_std]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod compare;
pub mod density;
pub mod econ;
mod error;
pub mod geometry;
pub mod landuse;
pub mod lisa;
pub mod rng;
pub mod stats;
pub mod survey;

pub use density::{FieldKind, GridField};
pub use error::{Error, Result};
pub use geometry::{BBox, Coord, GridSpec, Point, PointSet, Polygon, Zone, ZoneMap};
