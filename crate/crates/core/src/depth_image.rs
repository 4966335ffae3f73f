//! Spherical depth raster of one scan, with boundary voxels binned onto the
//! pixels whose rays they may block.
//!
//! Pixel `(col, row)` covers azimuth `[col·ψ − π, (col+1)·ψ − π)` and elevation
//! `[row·ψ − π/2, (row+1)·ψ − π/2)`. The raster is plain equirectangular.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rayon::prelude::*;

use crate::boundary::BoundaryRecord;
use crate::error::Error;
use crate::types::{
    cartesian_to_spherical, voxel_center, world_to_voxel, MapConfig, Point, Scan, SphericalCoord, Vector, INFLATION_CUBE,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelReturn {
    pub depth: f64,
    pub point: Point,
    /// Unit vector from the origin toward `point`.
    pub direction: Vector,
}

#[derive(Clone, Debug)]
pub struct DepthImage {
    psi: f64,
    width: usize,
    height: usize,
    origin: Point,
    returns: Vec<Option<PixelReturn>>,
    occupied: Vec<u32>,
    cand_offsets: Vec<u32>,
    candidates: Vec<BoundaryRecord>,
}

pub fn image_dims(psi: f64) -> (usize, usize) {
    ((2.0 * PI / psi).ceil() as usize, (PI / psi).ceil() as usize)
}

#[inline]
fn column_of(theta: f64, psi: f64, width: usize) -> usize {
    (((theta + PI) / psi).floor().max(0.0) as usize).min(width - 1)
}

#[inline]
fn row_of(phi: f64, psi: f64, height: usize) -> usize {
    (((phi + FRAC_PI_2) / psi).floor().max(0.0) as usize).min(height - 1)
}

/// Builds the raster, keeping the nearest return per pixel.
pub fn generate_depth_image(scan: &Scan, psi: f64) -> DepthImage {
    let (width, height) = image_dims(psi);
    let mut returns: Vec<Option<PixelReturn>> = vec![None; width * height];
    for p in &scan.points {
        let Ok(s) = cartesian_to_spherical(&(p - scan.origin)) else {
            continue;
        };
        let idx = row_of(s.phi, psi, height) * width + column_of(s.theta, psi, width);
        match &returns[idx] {
            Some(existing) if existing.depth <= s.r => {}
            _ => returns[idx] = Some(PixelReturn { depth: s.r, point: *p, direction: (p - scan.origin) / s.r }),
        }
    }
    let occupied = returns.iter().enumerate().filter_map(|(i, r)| r.map(|_| i as u32)).collect();
    DepthImage { psi, width, height, origin: scan.origin, returns, occupied, cand_offsets: Vec::new(), candidates: Vec::new() }
}

impl DepthImage {
    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn pixel_index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn pixel_of(&self, s: &SphericalCoord) -> (usize, usize) {
        (column_of(s.theta, self.psi, self.width), row_of(s.phi, self.psi, self.height))
    }

    pub fn get(&self, pixel: usize) -> Option<&PixelReturn> {
        self.returns[pixel].as_ref()
    }

    /// Indices of pixels holding a return, ascending.
    pub fn occupied_pixels(&self) -> &[u32] {
        &self.occupied
    }

    pub fn ray_count(&self) -> usize {
        self.occupied.len()
    }

    /// Candidate boundary records binned on `pixel`; empty before
    /// [`populate_candidates`] runs.
    pub fn candidates(&self, pixel: usize) -> &[BoundaryRecord] {
        if self.cand_offsets.is_empty() {
            return &[];
        }
        let lo = self.cand_offsets[pixel] as usize;
        let hi = self.cand_offsets[pixel + 1] as usize;
        &self.candidates[lo..hi]
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// 8-bit binary PGM of the depths, scaled so `max_depth` is white and
    /// empty pixels are black. Row 0 is the top (highest elevation).
    pub fn write_pgm<W: Write>(&self, mut out: W, max_depth: f64) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.width * self.height);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                let v = match &self.returns[self.pixel_index(col, row)] {
                    Some(r) => (1.0 + 254.0 * (r.depth / max_depth).clamp(0.0, 1.0)).round() as u8,
                    None => 0,
                };
                bytes.push(v);
            }
        }
        out.write_all(&bytes)
    }
}

/// Pixel rectangle covered by a projected voxel. Columns come as up to two
/// inclusive spans because the rectangle may wrap across the ±π seam.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub row_min: usize,
    pub row_max: usize,
    pub col_spans: [Option<(usize, usize)>; 2],
}

impl PixelRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self { row_min: 0, row_max: height - 1, col_spans: [Some((0, width - 1)), None] }
    }

    pub fn pixels(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row_min..=self.row_max).flat_map(move |row| {
            self.col_spans.iter().flatten().flat_map(move |&(lo, hi)| (lo..=hi).map(move |col| row * width + col))
        })
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        (self.row_min..=self.row_max).contains(&row) && self.col_spans.iter().flatten().any(|&(lo, hi)| (lo..=hi).contains(&col))
    }
}

/// Angular extent of a voxel's circumscribing sphere as seen from the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularBounds {
    pub center: SphericalCoord,
    /// Half-angle of the cone tangent to the sphere.
    pub half_angle: f64,
    /// Half-width in azimuth; `None` when the cone contains a pole.
    pub azimuth_half_width: Option<f64>,
}

/// Angular footprint of a sphere of diameter `inflation · d` centered at
/// `center`. Fails when the sphere reaches within `d` of the origin.
pub fn angular_bounds(center: &Point, origin: &Point, inflation: f64, d: f64) -> Result<AngularBounds, Error> {
    let s = cartesian_to_spherical(&(center - origin)).map_err(|_| Error::EngulfsOrigin(world_to_voxel(center, d)))?;
    if s.r <= d {
        return Err(Error::EngulfsOrigin(world_to_voxel(center, d)));
    }
    let radius = inflation * d / 2.0;
    let sin_half = (radius / s.r).min(1.0);
    // Widened by a few ulps so rounding never shrinks the footprint.
    let half_angle = sin_half.asin() * (1.0 + 1e-12) + 1e-15;
    let azimuth_half_width = if s.phi.abs() + half_angle >= FRAC_PI_2 {
        None
    } else {
        let w = sin_half / s.phi.cos();
        (w < 1.0).then(|| w.asin() * (1.0 + 1e-12) + 1e-15)
    };
    Ok(AngularBounds { center: s, half_angle, azimuth_half_width })
}

/// Pixel rectangle of a boundary voxel.
///
/// The voxel is approximated by a sphere of diameter `inflation · d`; with
/// `inflation = √3` the sphere contains the cube and the rectangle covers
/// every ray that can pass through it. Lower bounds use floor, upper bounds
/// ceil, both clamped to the raster.
pub fn project_boundary_voxel(
    record: &BoundaryRecord,
    origin: &Point,
    psi: f64,
    inflation: f64,
    d: f64,
) -> Result<PixelRect, Error> {
    let (width, height) = image_dims(psi);
    let b = angular_bounds(&voxel_center(&record.key, d), origin, inflation, d)?;
    let row_lo = ((b.center.phi - b.half_angle + FRAC_PI_2) / psi).floor();
    let row_hi = ((b.center.phi + b.half_angle + FRAC_PI_2) / psi).ceil();
    let row_min = row_lo.max(0.0) as usize;
    let row_max = (row_hi.max(0.0) as usize).min(height - 1);

    let full_cols = [Some((0, width - 1)), None];
    let col_spans = match b.azimuth_half_width {
        None => full_cols,
        Some(w) if w >= PI => full_cols,
        Some(w) => {
            let lo = b.center.theta - w;
            let hi = b.center.theta + w;
            let span = |a: f64, b: f64| {
                let c0 = ((a + PI) / psi).floor().max(0.0) as usize;
                let c1 = (((b + PI) / psi).ceil().max(0.0) as usize).min(width - 1);
                (c0.min(width - 1), c1)
            };
            let (main, wrapped) = if lo < -PI {
                (span(-PI, hi), Some(span(lo + 2.0 * PI, PI)))
            } else if hi >= PI {
                (span(lo, PI), Some(span(-PI, hi - 2.0 * PI)))
            } else {
                (span(lo, hi), None)
            };
            match wrapped {
                None => [Some(main), None],
                Some(wrap) => {
                    let (left, right) = if wrap.0 <= main.0 { (wrap, main) } else { (main, wrap) };
                    if left.1 + 1 >= right.0 {
                        [Some((left.0, left.1.max(right.1))), None]
                    } else {
                        [Some(left), Some(right)]
                    }
                }
            }
        }
    };
    Ok(PixelRect { row_min, row_max, col_spans })
}

/// Bins each record onto the non-empty pixels of its rectangle whose ray
/// can touch it.
///
/// A pixel holds exactly one ray, so beyond the rectangle each pixel's ray is
/// tested against the record's sphere of diameter `inflation · d`: the ray
/// line must pass within the sphere, and the return must lie no nearer than
/// the sphere's center minus the voxel circumradius. Records whose sphere
/// engulfs the origin start from the full image. Each candidate list is in
/// input record order.
pub fn populate_candidates(image: &mut DepthImage, boundary_in_fov: &[BoundaryRecord], origin: &Point, config: &MapConfig) {
    let d = config.resolution;
    let margin = INFLATION_CUBE * d / 2.0;
    let radius = config.inflation * d / 2.0;
    // Slack so rounding in the distance test never drops a touching ray.
    let radius2 = radius * radius * (1.0 + 1e-9) + 1e-18;
    let (width, height) = (image.width, image.height);
    // Direction and farthest admissible center distance per pixel, packed
    // tight; empty pixels admit nothing.
    let rays: Vec<(Vector, f64)> = image
        .returns
        .iter()
        .map(|r| match r {
            Some(r) => (r.direction, r.depth + margin),
            None => (Vector::zeros(), f64::NEG_INFINITY),
        })
        .collect();

    let pairs: Vec<(u32, u32)> = boundary_in_fov
        .par_iter()
        .enumerate()
        .fold(Vec::new, |mut acc, (idx, record)| {
            let rect = project_boundary_voxel(record, origin, image.psi, config.inflation, d)
                .unwrap_or_else(|_| PixelRect::full(width, height));
            let c = voxel_center(&record.key, d) - origin;
            let r2 = c.norm_squared();
            let r_c = r2.sqrt();
            for pixel in rect.pixels(width) {
                let (dir, reach) = &rays[pixel];
                if r_c > *reach {
                    continue;
                }
                let t = c.dot(dir);
                if r2 - t * t <= radius2 {
                    acc.push((pixel as u32, idx as u32));
                }
            }
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        });

    // Counting sort by pixel; pairs arrive in record order, which it keeps.
    let mut offsets = vec![0u32; width * height + 1];
    for &(pixel, _) in &pairs {
        offsets[pixel as usize + 1] += 1;
    }
    for i in 0..width * height {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut order = vec![0u32; pairs.len()];
    for &(pixel, idx) in &pairs {
        let slot = &mut cursor[pixel as usize];
        order[*slot as usize] = idx;
        *slot += 1;
    }
    image.candidates = order.iter().map(|&idx| boundary_in_fov[idx as usize]).collect();
    image.cand_offsets = offsets;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryClass;
    use crate::types::{spherical_to_cartesian, VoxelKey, INFLATION_FACE};

    fn scan_of(points: Vec<Point>) -> Scan {
        Scan::new(Point::origin(), points, 0.0)
    }

    #[test]
    fn empty_scan_gives_empty_image() {
        let img = generate_depth_image(&scan_of(vec![]), 0.01);
        assert_eq!(img.ray_count(), 0);
        assert!((0..img.width() * img.height()).all(|p| img.get(p).is_none()));
    }

    #[test]
    fn single_return() {
        let img = generate_depth_image(&scan_of(vec![Point::new(5.0, 0.0, 0.0)]), 0.01);
        assert_eq!(img.ray_count(), 1);
        let px = img.occupied_pixels()[0] as usize;
        assert_eq!(img.get(px).unwrap().depth, 5.0);
        assert_eq!(px, img.pixel_index(314, 157));
    }

    #[test]
    fn nearest_return_wins() {
        let img = generate_depth_image(&scan_of(vec![Point::new(6.0, 0.0, 0.0), Point::new(4.0, 0.0001, 0.0)]), 0.01);
        assert_eq!(img.ray_count(), 1);
        let ret = img.get(img.occupied_pixels()[0] as usize).unwrap();
        assert_eq!(ret.point, Point::new(4.0, 0.0001, 0.0));
        assert!((ret.depth - 4.0).abs() < 1e-8);
    }

    #[test]
    fn dims_cover_sphere() {
        assert_eq!(image_dims(0.01), (629, 315));
        assert_eq!(image_dims(2.0 * PI / 360.0), (360, 180));
    }

    /// Hand-evaluated projection: r_c = 10, θ_c = 0.1, φ_c = 0, d = 0.2,
    /// ψ = 0.005, inflation √2. The half angle is asin(√2·0.2/20) ≈ 0.0141426,
    /// so the azimuth indices measured from θ = 0 are
    /// floor((0.1 − 0.0141426)/0.005) = 17 and ceil((0.1 + 0.0141426)/0.005) = 23.
    #[test]
    fn projection_example() {
        let (psi, d) = (0.005, 0.2);
        let center = spherical_to_cartesian(&SphericalCoord { r: 10.0, theta: 0.1, phi: 0.0 });
        let b = angular_bounds(&Point::from(center), &Point::origin(), INFLATION_FACE, d).unwrap();
        let w = b.azimuth_half_width.unwrap();
        assert!((w - (2f64.sqrt() * 0.2 / 20.0).atan()).abs() < 2e-6);
        assert_eq!(((b.center.theta - w) / psi).floor(), 17.0);
        assert_eq!(((b.center.theta + w) / psi).ceil(), 23.0);
    }

    fn record_at(center: Point, d: f64) -> BoundaryRecord {
        BoundaryRecord::new(crate::types::world_to_voxel(&center, d), BoundaryClass::Interior, 1)
    }

    #[test]
    fn far_voxels_shrink_to_one_pixel_neighborhood() {
        let psi = 0.01;
        let d = 0.1;
        let dir = spherical_to_cartesian(&SphericalCoord { r: 1.0, theta: 0.123, phi: 0.0444 });
        let center = Point::from(dir * 1e6);
        let rec = record_at(center, d);
        let rect = project_boundary_voxel(&rec, &Point::origin(), psi, INFLATION_CUBE, d).unwrap();
        let (w, h) = image_dims(psi);
        let col = column_of(0.123, psi, w);
        let row = row_of(0.0444, psi, h);
        assert!(rect.contains(col, row));
        assert!(rect.row_max - rect.row_min <= 1);
        let (lo, hi) = rect.col_spans[0].unwrap();
        assert!(hi - lo <= 1 && rect.col_spans[1].is_none());
    }

    #[test]
    fn seam_voxel_wraps() {
        let psi = 0.01;
        let d = 0.2;
        let rec = BoundaryRecord::new(VoxelKey::new(-26, -1, 0), BoundaryClass::Interior, 1);
        let rect = project_boundary_voxel(&rec, &Point::new(0.0, 0.0, 0.1), psi, INFLATION_CUBE, d).unwrap();
        let (w, _) = image_dims(psi);
        let spans: Vec<_> = rect.col_spans.iter().flatten().copied().collect();
        assert_eq!(spans.len(), 2, "{rect:?}");
        assert_eq!(spans[0].0, 0);
        assert_eq!(spans[1].1, w - 1);
    }

    #[test]
    fn engulfing_voxel_is_an_error() {
        let rec = BoundaryRecord::new(VoxelKey::new(0, 0, 0), BoundaryClass::Interior, 1);
        let err = project_boundary_voxel(&rec, &Point::new(0.1, 0.1, 0.1), 0.01, INFLATION_CUBE, 0.25);
        assert!(matches!(err, Err(Error::EngulfsOrigin(_))));
    }

    fn config(d: f64, psi: f64) -> MapConfig {
        MapConfig { resolution: d, psi, ..Default::default() }
    }

    #[test]
    fn occluder_must_be_nearer() {
        let d = 0.25;
        let cfg = config(d, 0.01);
        let mut img = generate_depth_image(&scan_of(vec![Point::new(5.05, 0.05, 0.05)]), cfg.psi);
        let behind = record_at(Point::new(5.05 + 10.0 * d, 0.05, 0.05), d);
        let halfway = record_at(Point::new(2.55, 0.05, 0.05), d);
        let at_return = record_at(Point::new(5.05, 0.05, 0.05), d);
        populate_candidates(&mut img, &[behind, halfway, at_return], &Point::origin(), &cfg);
        let px = img.occupied_pixels()[0] as usize;
        assert_eq!(img.candidates(px), &[halfway, at_return]);
    }

    #[test]
    fn empty_pixels_get_no_candidates() {
        let d = 0.25;
        let cfg = config(d, 0.01);
        let mut img = generate_depth_image(&scan_of(vec![Point::new(5.0, 0.05, 0.05)]), cfg.psi);
        let rec = record_at(Point::new(0.05, 3.0, 0.05), d);
        populate_candidates(&mut img, &[rec], &Point::origin(), &cfg);
        assert_eq!(img.candidate_count(), 0);
    }

    #[test]
    fn pgm_header() {
        let img = generate_depth_image(&scan_of(vec![Point::new(5.0, 0.0, 0.0)]), 0.1);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf, 20.0).unwrap();
        assert!(buf.starts_with(b"P5\n63 32\n255\n"));
        assert_eq!(buf.len(), 13 + 63 * 32);
    }
}
