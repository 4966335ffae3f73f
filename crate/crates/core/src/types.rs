//! Shared primitives: lattice keys, occupancy states, spherical coordinates,
//! scans and mapper configuration.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use nalgebra::{Point3, Vector3};

use crate::error::Error;

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

/// Integer lattice coordinate of a cubic voxel.
///
/// Voxel `(i, j, k)` covers `[i·d, (i+1)·d) × [j·d, (j+1)·d) × [k·d, (k+1)·d)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl VoxelKey {
    pub const fn new(i: i32, j: i32, k: i32) -> Self {
        Self { i, j, k }
    }

    #[inline]
    pub fn axis(&self, axis: usize) -> i32 {
        match axis {
            0 => self.i,
            1 => self.j,
            _ => self.k,
        }
    }

    #[inline]
    pub fn set_axis(&mut self, axis: usize, value: i32) {
        match axis {
            0 => self.i = value,
            1 => self.j = value,
            _ => self.k = value,
        }
    }

    #[inline]
    pub fn offset(&self, di: i32, dj: i32, dk: i32) -> Self {
        Self::new(self.i + di, self.j + dj, self.k + dk)
    }

    /// Lower corner of the voxel cube.
    pub fn min_corner(&self, d: f64) -> Point {
        Point::new(lattice_plane(self.i, d), lattice_plane(self.j, d), lattice_plane(self.k, d))
    }

    /// Upper corner of the voxel cube.
    pub fn max_corner(&self, d: f64) -> Point {
        Point::new(lattice_plane(self.i + 1, d), lattice_plane(self.j + 1, d), lattice_plane(self.k + 1, d))
    }
}

impl fmt::Display for VoxelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.i, self.j, self.k)
    }
}

/// World coordinate of lattice plane `index` along any axis.
///
/// Every voxel bound, DDA crossing and slab test goes through this one
/// expression so that the floating-point values agree bit for bit.
#[inline]
pub fn lattice_plane(index: i32, d: f64) -> f64 {
    index as f64 * d
}

/// Lattice index of a scalar coordinate, consistent with [`lattice_plane`]:
/// the result `n` always satisfies `plane(n) <= x < plane(n + 1)`.
#[inline]
pub fn lattice_index(x: f64, d: f64) -> i32 {
    let mut n = (x / d).floor() as i32;
    if lattice_plane(n, d) > x {
        n -= 1;
    } else if lattice_plane(n + 1, d) <= x {
        n += 1;
    }
    n
}

/// Voxel containing `p`, floor convention.
pub fn world_to_voxel(p: &Point, d: f64) -> VoxelKey {
    VoxelKey::new(lattice_index(p.x, d), lattice_index(p.y, d), lattice_index(p.z, d))
}

pub fn voxel_center(v: &VoxelKey, d: f64) -> Point {
    Point::new((v.i as f64 + 0.5) * d, (v.j as f64 + 0.5) * d, (v.k as f64 + 0.5) * d)
}

/// Face neighbors in the fixed order −x, +x, −y, +y, −z, +z.
///
/// Bit `n` of every neighbor mask in the crate refers to entry `n` here.
pub fn six_neighbors(v: &VoxelKey) -> [VoxelKey; 6] {
    [v.offset(-1, 0, 0), v.offset(1, 0, 0), v.offset(0, -1, 0), v.offset(0, 1, 0), v.offset(0, 0, -1), v.offset(0, 0, 1)]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OccupancyState {
    Free,
    Occupied,
    #[default]
    Unknown,
}

impl OccupancyState {
    #[inline]
    pub fn is_free(self) -> bool {
        self == OccupancyState::Free
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OccupancyState::Free => "free",
            OccupancyState::Occupied => "occupied",
            OccupancyState::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "free" => Some(OccupancyState::Free),
            "occupied" => Some(OccupancyState::Occupied),
            "unknown" => Some(OccupancyState::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for OccupancyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Range, azimuth in `[−π, π)` and elevation in `[−π/2, π/2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalCoord {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

pub fn cartesian_to_spherical(p: &Vector) -> Result<SphericalCoord, Error> {
    let r = p.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    let mut theta = p.y.atan2(p.x);
    if theta >= PI {
        theta -= 2.0 * PI;
    }
    let phi = (p.z / r).clamp(-1.0, 1.0).asin();
    Ok(SphericalCoord { r, theta, phi })
}

pub fn spherical_to_cartesian(s: &SphericalCoord) -> Vector {
    let (sin_phi, cos_phi) = s.phi.sin_cos();
    let (sin_theta, cos_theta) = s.theta.sin_cos();
    Vector::new(s.r * cos_phi * cos_theta, s.r * cos_phi * sin_theta, s.r * sin_phi)
}

/// One sensor sweep: origin, returns and capture time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scan {
    pub origin: Point,
    pub points: Vec<Point>,
    pub timestamp: f64,
}

impl Scan {
    pub fn new(origin: Point, points: Vec<Point>, timestamp: f64) -> Self {
        Self { origin, points, timestamp }
    }

    /// Drops returns nearer than `d/10` or farther than the sensing range.
    pub fn filtered(&self, config: &MapConfig) -> Scan {
        let near = config.near_limit();
        let points = self
            .points
            .iter()
            .filter(|p| {
                let r = (*p - self.origin).norm();
                r >= near && r <= config.range
            })
            .copied()
            .collect();
        Scan { origin: self.origin, points, timestamp: self.timestamp }
    }
}

/// Axis along which boundary records are stacked into columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ProjectionAxis {
    X,
    Y,
    #[default]
    Z,
}

impl ProjectionAxis {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            ProjectionAxis::X => 0,
            ProjectionAxis::Y => 1,
            ProjectionAxis::Z => 2,
        }
    }

    /// The two in-plane axes, in ascending order.
    #[inline]
    pub fn plane_axes(self) -> (usize, usize) {
        match self {
            ProjectionAxis::X => (1, 2),
            ProjectionAxis::Y => (0, 2),
            ProjectionAxis::Z => (0, 1),
        }
    }

    /// Column coordinate of a key.
    #[inline]
    pub fn column_of(self, key: &VoxelKey) -> (i32, i32) {
        let (a, b) = self.plane_axes();
        (key.axis(a), key.axis(b))
    }

    /// Position of a key along the column.
    #[inline]
    pub fn height_of(self, key: &VoxelKey) -> i32 {
        key.axis(self.index())
    }

    #[inline]
    pub fn compose(self, column: (i32, i32), height: i32) -> VoxelKey {
        let (a, b) = self.plane_axes();
        let mut key = VoxelKey::default();
        key.set_axis(a, column.0);
        key.set_axis(b, column.1);
        key.set_axis(self.index(), height);
        key
    }

    /// Mask bits of the −axis and +axis neighbors.
    #[inline]
    pub fn run_bits(self) -> (u8, u8) {
        let i = self.index() as u8;
        (1 << (2 * i), 1 << (2 * i + 1))
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "x" | "X" => Some(ProjectionAxis::X),
            "y" | "Y" => Some(ProjectionAxis::Y),
            "z" | "Z" => Some(ProjectionAxis::Z),
            _ => None,
        }
    }
}

pub const INFLATION_CUBE: f64 = 1.732_050_807_568_877_2;
pub const INFLATION_FACE: f64 = SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapConfig {
    /// Voxel edge length, meters.
    pub resolution: f64,
    /// Sensing range, meters.
    pub range: f64,
    /// Depth-image angular resolution, radians.
    pub psi: f64,
    /// Voxel footprint diameter used for projection, in units of the edge length.
    pub inflation: f64,
    pub projection_axis: ProjectionAxis,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.25,
            range: 20.0,
            psi: 2.0 * PI / 360.0,
            inflation: INFLATION_CUBE,
            projection_axis: ProjectionAxis::Z,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.resolution > 0.0
            && self.resolution.is_finite()
            && self.range > self.resolution
            && self.range.is_finite()
            && self.psi > 0.0
            && self.psi < PI
            && self.inflation > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Returns nearer than this are discarded at ingestion.
    pub fn near_limit(&self) -> f64 {
        self.resolution / 10.0
    }

    /// Radius of the sphere circumscribing a voxel.
    pub fn voxel_circumradius(&self) -> f64 {
        INFLATION_CUBE * self.resolution / 2.0
    }
}
