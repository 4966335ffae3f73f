//! Occupancy mapping that stores only the boundary of free space.
//!
//! The map keeps the voxels on either side of the surface enclosing known
//! free space, stacked in columns, and recovers every other voxel's state
//! from them. Each scan casts rays only across the stretches that lie outside
//! that surface. A classical dense mapper is included as a reference, along
//! with a box-world LiDAR simulator and a benchmark runner.

pub mod bench;
pub mod boundary;
pub mod dda;
pub mod dense;
pub mod depth_image;
pub mod error;
pub mod geometry;
pub mod raycast;
pub mod scanlog;
pub mod scene;
pub mod types;
pub mod update;

pub use boundary::{BoundaryClass, BoundaryMap, BoundaryRecord, MemoryStats};
pub use dense::{audit_boundary, DenseGrid, RayMode};
pub use error::{Error, Result};
pub use types::{MapConfig, OccupancyState, Point, ProjectionAxis, Scan, Vector, VoxelKey};
pub use update::{BoundaryMapper, UpdateReport};
