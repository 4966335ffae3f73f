//! Box worlds and a simulated spinning LiDAR.
//!
//! Scene files hold one box per line, optionally restricted to a range of
//! scan indices:
//!
//! ```text
//! BOUNDS -1 -1 -1 11 11 5
//! BOX 0 0 0 10 10 0.5
//! BOX 4 4 0.5 5 5 2.5 0 5
//! ```
//!
//! The second box above is seen by scans 0 to 4 only. `BOUNDS` is optional
//! and defaults to the union of all boxes. Trajectories hold one
//! `POSE <t> <x> <y> <z> <yaw>` line per scan.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{slab_intersect, Aabb};
use crate::types::{Point, Scan, Vector};

/// A box that exists only for scans `visible.0 .. visible.1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicBox {
    pub bbox: Aabb,
    pub visible: (usize, usize),
}

impl DynamicBox {
    pub fn is_visible(&self, scan_index: usize) -> bool {
        (self.visible.0..self.visible.1).contains(&scan_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub static_boxes: Vec<Aabb>,
    pub dynamic_boxes: Vec<DynamicBox>,
    pub bounds: Aabb,
}

impl Scene {
    /// Scene whose bounds are the union of its boxes.
    pub fn new(static_boxes: Vec<Aabb>, dynamic_boxes: Vec<DynamicBox>) -> Self {
        let bounds = static_boxes
            .iter()
            .chain(dynamic_boxes.iter().map(|b| &b.bbox))
            .copied()
            .reduce(|a, b| a.union(&b))
            .unwrap_or(Aabb::new(Point::origin(), Point::new(1.0, 1.0, 1.0)));
        Self { static_boxes, dynamic_boxes, bounds }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_valid() {
            return Err(Error::InvalidConfig(format!("degenerate scene bounds {:?}", self.bounds)));
        }
        for b in self.static_boxes.iter().chain(self.dynamic_boxes.iter().map(|b| &b.bbox)) {
            if !b.is_valid() {
                return Err(Error::InvalidConfig(format!("degenerate box {b:?}")));
            }
            if !self.bounds.contains_box(b) {
                return Err(Error::InvalidConfig(format!("box {b:?} lies outside the scene bounds")));
            }
        }
        Ok(())
    }

    pub fn visible_boxes(&self, scan_index: usize) -> impl Iterator<Item = &Aabb> {
        self.static_boxes.iter().chain(self.dynamic_boxes.iter().filter(move |b| b.is_visible(scan_index)).map(|b| &b.bbox))
    }
}

/// Regular azimuth × elevation ray lattice, offset by half a step in both
/// directions so no ray runs along a lattice axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPattern {
    pub n_azimuth: usize,
    pub n_elevation: usize,
    /// Total elevation span, centered on the horizon, radians.
    pub elevation_span: f64,
    pub max_range: f64,
}

impl Default for ScanPattern {
    fn default() -> Self {
        Self { n_azimuth: 128, n_elevation: 32, elevation_span: PI / 4.0, max_range: 20.0 }
    }
}

impl ScanPattern {
    pub fn validate(&self) -> Result<()> {
        if self.n_azimuth < 4 {
            return Err(Error::InvalidPattern(format!("n_azimuth = {} (need at least 4)", self.n_azimuth)));
        }
        if self.n_elevation < 2 {
            return Err(Error::InvalidPattern(format!("n_elevation = {} (need at least 2)", self.n_elevation)));
        }
        if !(self.elevation_span > 0.0 && self.elevation_span < PI) {
            return Err(Error::InvalidPattern(format!("elevation span {} outside (0, π)", self.elevation_span)));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidPattern(format!("max range {}", self.max_range)));
        }
        Ok(())
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.n_azimuth as f64
    }

    pub fn elevation_step(&self) -> f64 {
        self.elevation_span / self.n_elevation as f64
    }

    /// Finer of the two lattice steps; a depth image at this resolution
    /// keeps nearly every ray in its own pixel.
    pub fn angular_spacing(&self) -> f64 {
        self.azimuth_step().min(self.elevation_step())
    }

    /// Unit ray directions, elevation-major.
    pub fn directions(&self, yaw: f64) -> Vec<Vector> {
        let (da, de) = (self.azimuth_step(), self.elevation_step());
        let mut out = Vec::with_capacity(self.n_azimuth * self.n_elevation);
        for m in 0..self.n_elevation {
            let el = -self.elevation_span / 2.0 + (m as f64 + 0.5) * de;
            let (se, ce) = el.sin_cos();
            for n in 0..self.n_azimuth {
                let az = yaw + (n as f64 + 0.5) * da;
                let (sa, ca) = az.sin_cos();
                out.push(Vector::new(ce * ca, ce * sa, se));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub position: Point,
    pub yaw: f64,
}

impl Pose {
    pub fn new(t: f64, position: Point, yaw: f64) -> Self {
        Self { t, position, yaw }
    }
}

/// Nearest hit of a ray among `boxes`, snapped exactly onto the face it
/// enters through.
fn cast(origin: &Point, dir: &Vector, boxes: &[&Aabb], max_range: f64) -> Option<Point> {
    let mut best: Option<(f64, &Aabb)> = None;
    for b in boxes {
        if let Some((t0, _)) = slab_intersect(origin, dir, &b.min, &b.max) {
            if t0 >= 0.0 && best.is_none_or(|(t, _)| t0 < t) {
                best = Some((t0, b));
            }
        }
    }
    let (t, b) = best.filter(|(t, _)| *t <= max_range)?;
    let mut p = origin + dir * t;
    let mut face = (f64::INFINITY, 0, 0.0);
    for a in 0..3 {
        for plane in [b.min[a], b.max[a]] {
            let gap = (p[a] - plane).abs();
            if gap < face.0 {
                face = (gap, a, plane);
            }
        }
    }
    p[face.1] = face.2;
    Some(p)
}

/// One sweep from `pose` against the boxes visible at `scan_index`.
/// Rays that hit nothing within range give no return.
pub fn simulate_scan(scene: &Scene, pose: &Pose, pattern: &ScanPattern, scan_index: usize) -> Result<Scan> {
    pattern.validate()?;
    let boxes: Vec<&Aabb> = scene.visible_boxes(scan_index).collect();
    let origin = pose.position;
    if boxes.iter().any(|b| b.contains(&origin)) {
        return Err(Error::PoseInsideBox([origin.x, origin.y, origin.z]));
    }
    let points =
        pattern.directions(pose.yaw).par_iter().filter_map(|dir| cast(&origin, dir, &boxes, pattern.max_range)).collect();
    Ok(Scan::new(origin, points, pose.t))
}

/// Sweeps along a whole trajectory; scan `n` uses pose `n`.
pub fn simulate_sequence(scene: &Scene, trajectory: &[Pose], pattern: &ScanPattern) -> Result<Vec<Scan>> {
    trajectory.iter().enumerate().map(|(n, pose)| simulate_scan(scene, pose, pattern, n)).collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            out.push((n + 1, trimmed.to_string()));
        }
    }
    Ok(out)
}

fn floats(fields: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::parse(path, line, format!("bad number `{f}`")))
        })
        .collect()
}

fn bbox_of(v: &[f64], path: &Path, line: usize) -> Result<Aabb> {
    let b = Aabb::new(Point::new(v[0], v[1], v[2]), Point::new(v[3], v[4], v[5]));
    if !b.is_valid() {
        return Err(Error::parse(path, line, "box min must be below max on every axis"));
    }
    Ok(b)
}

pub fn parse_scene(lines: &[(usize, String)], path: &Path) -> Result<Scene> {
    let mut static_boxes = Vec::new();
    let mut dynamic_boxes = Vec::new();
    let mut bounds = None;
    for (n, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "BOX" if fields.len() == 7 => static_boxes.push(bbox_of(&floats(&fields[1..], path, *n)?, path, *n)?),
            "BOX" if fields.len() == 9 => {
                let bbox = bbox_of(&floats(&fields[1..7], path, *n)?, path, *n)?;
                let idx = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(path, *n, format!("bad scan index `{s}`")));
                let visible = (idx(fields[7])?, idx(fields[8])?);
                dynamic_boxes.push(DynamicBox { bbox, visible });
            }
            "BOX" => return Err(Error::parse(path, *n, "expected `BOX x0 y0 z0 x1 y1 z1 [scan_a scan_b]`")),
            "BOUNDS" if fields.len() == 7 => bounds = Some(bbox_of(&floats(&fields[1..], path, *n)?, path, *n)?),
            "BOUNDS" => return Err(Error::parse(path, *n, "expected `BOUNDS x0 y0 z0 x1 y1 z1`")),
            other => return Err(Error::parse(path, *n, format!("unknown record `{other}`"))),
        }
    }
    if static_boxes.is_empty() && dynamic_boxes.is_empty() && bounds.is_none() {
        return Err(Error::EmptyInput { path: path.into(), message: "no boxes".into() });
    }
    let mut scene = Scene::new(static_boxes, dynamic_boxes);
    if let Some(b) = bounds {
        scene.bounds = b;
    }
    scene.validate()?;
    Ok(scene)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    parse_scene(&read_lines(path)?, path)
}

pub fn write_scene<W: Write>(mut out: W, scene: &Scene) -> std::io::Result<()> {
    let (lo, hi) = (scene.bounds.min, scene.bounds.max);
    writeln!(out, "BOUNDS {} {} {} {} {} {}", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z)?;
    for b in &scene.static_boxes {
        writeln!(out, "BOX {} {} {} {} {} {}", b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z)?;
    }
    for d in &scene.dynamic_boxes {
        let b = d.bbox;
        writeln!(
            out,
            "BOX {} {} {} {} {} {} {} {}",
            b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z, d.visible.0, d.visible.1
        )?;
    }
    Ok(())
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_file(path, |out| write_scene(out, scene))
}

pub fn load_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (n, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "POSE" || fields.len() != 6 {
            return Err(Error::parse(path, n, "expected `POSE t x y z yaw`"));
        }
        let v = floats(&fields[1..], path, n)?;
        poses.push(Pose::new(v[0], Point::new(v[1], v[2], v[3]), v[4]));
    }
    if poses.is_empty() {
        return Err(Error::EmptyInput { path: path.into(), message: "no poses".into() });
    }
    Ok(poses)
}

pub fn write_trajectory<W: Write>(mut out: W, poses: &[Pose]) -> std::io::Result<()> {
    for p in poses {
        writeln!(out, "POSE {} {} {} {} {}", p.t, p.position.x, p.position.y, p.position.z, p.yaw)?;
    }
    Ok(())
}

pub fn save_trajectory(path: &Path, poses: &[Pose]) -> Result<()> {
    write_file(path, |out| write_trajectory(out, poses))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

/// Closed box room: six slabs of `wall` thickness around the inner volume.
pub fn room_walls(inner_min: Point, inner_max: Point, wall: f64) -> Vec<Aabb> {
    let (a, b) = (inner_min, inner_max);
    let (oa, ob) = (a - Vector::repeat(wall), b + Vector::repeat(wall));
    vec![
        Aabb::new(Point::new(oa.x, oa.y, oa.z), Point::new(ob.x, ob.y, a.z)),
        Aabb::new(Point::new(oa.x, oa.y, b.z), Point::new(ob.x, ob.y, ob.z)),
        Aabb::new(Point::new(oa.x, oa.y, a.z), Point::new(a.x, ob.y, b.z)),
        Aabb::new(Point::new(b.x, oa.y, a.z), Point::new(ob.x, ob.y, b.z)),
        Aabb::new(Point::new(a.x, oa.y, a.z), Point::new(b.x, a.y, b.z)),
        Aabb::new(Point::new(a.x, b.y, a.z), Point::new(b.x, ob.y, b.z)),
    ]
}

/// Parameters of a randomly furnished room.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoomSpec {
    pub size: Vector,
    pub min_boxes: usize,
    pub max_boxes: usize,
    pub scans: usize,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self { size: Vector::new(30.0, 30.0, 10.0), min_boxes: 3, max_boxes: 8, scans: 10 }
    }
}

/// A closed room with random boxes and a trajectory that circles its
/// center, both determined by `seed`.
///
/// The room is shifted off the lattice origin by a fraction of a meter so
/// walls do not sit exactly on voxel faces. Boxes stay clear of the central
/// area the trajectory runs through.
pub fn random_room(spec: &RoomSpec, seed: u64) -> (Scene, Vec<Pose>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = Vector::new(rng.random_range(0.01..0.2), rng.random_range(0.01..0.2), rng.random_range(0.01..0.2));
    let lo = Point::origin() + shift;
    let hi = lo + spec.size;
    let center = lo + spec.size / 2.0;
    let keep_out = Aabb::new(Point::new(center.x - 4.0, center.y - 4.0, lo.z), Point::new(center.x + 4.0, center.y + 4.0, hi.z));
    let n_boxes = rng.random_range(spec.min_boxes..=spec.max_boxes);
    let mut boxes = room_walls(lo, hi, 0.5);
    let mut placed = 0;
    while placed < n_boxes {
        let ext = Vector::new(rng.random_range(0.5..4.0), rng.random_range(0.5..4.0), rng.random_range(0.5..spec.size.z * 0.6));
        let min = Point::new(
            rng.random_range(lo.x..hi.x - ext.x),
            rng.random_range(lo.y..hi.y - ext.y),
            if rng.random_bool(0.7) { lo.z } else { rng.random_range(lo.z..hi.z - ext.z) },
        );
        let b = Aabb::new(min, min + ext);
        let overlaps_keep_out = (0..3).all(|a| b.min[a] < keep_out.max[a] && keep_out.min[a] < b.max[a]);
        if !overlaps_keep_out {
            boxes.push(b);
            placed += 1;
        }
    }
    let mut trajectory = Vec::with_capacity(spec.scans);
    for n in 0..spec.scans {
        let a = 2.0 * PI * n as f64 / spec.scans.max(1) as f64;
        let position = Point::new(center.x + 2.5 * a.cos(), center.y + 2.5 * a.sin(), lo.z + 1.7 + 0.2 * (3.0 * a).sin());
        trajectory.push(Pose::new(n as f64 * 0.1, position, a + 0.3));
    }
    (Scene::new(boxes, Vec::new()), trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_room() -> Scene {
        Scene::new(room_walls(Point::new(-2.0, -3.0, -1.0), Point::new(2.0, 3.0, 1.5), 0.5), Vec::new())
    }

    #[test]
    fn empty_scene_gives_no_returns() {
        let scene = Scene::new(Vec::new(), Vec::new());
        let scan = simulate_scan(&scene, &Pose::new(0.0, Point::new(0.5, 0.5, 0.5), 0.0), &ScanPattern::default(), 0).unwrap();
        assert!(scan.points.is_empty());
    }

    #[test]
    fn closed_room_returns_on_walls() {
        let room = unit_room();
        let pattern = ScanPattern { n_azimuth: 64, n_elevation: 16, elevation_span: 2.5, max_range: 20.0 };
        let o = Point::origin();
        let scan = simulate_scan(&room, &Pose::new(0.0, o, 0.1), &pattern, 0).unwrap();
        assert_eq!(scan.points.len(), 64 * 16);
        for (p, dir) in scan.points.iter().zip(pattern.directions(0.1)) {
            // Distance to the first wall plane crossed along `dir`.
            let wall = (0..3)
                .filter(|&a| dir[a] != 0.0)
                .map(|a| {
                    let plane = if dir[a] > 0.0 { [2.0, 3.0, 1.5][a] } else { [-2.0, -3.0, -1.0][a] };
                    (plane - o[a]) / dir[a]
                })
                .fold(f64::INFINITY, f64::min);
            assert!(((p - o).norm() - wall).abs() < 1e-9);
            let on_face = (0..3).any(|a| [-2.0, -3.0, -1.0, 2.0, 3.0, 1.5].contains(&p[a]));
            assert!(on_face, "{p:?}");
        }
    }

    #[test]
    fn dynamic_box_follows_interval() {
        let obstacle = Aabb::new(Point::new(0.5, -0.5, -0.5), Point::new(1.0, 0.5, 0.5));
        let room = unit_room();
        let scene = Scene::new(room.static_boxes.clone(), vec![DynamicBox { bbox: obstacle, visible: (0, 3) }]);
        let pose = Pose::new(0.0, Point::origin(), 0.0);
        let pattern = ScanPattern { n_azimuth: 32, n_elevation: 8, elevation_span: 0.5, max_range: 20.0 };
        let on_box = |s: &Scan| s.points.iter().filter(|p| p.x == 0.5).count();
        assert!(on_box(&simulate_scan(&scene, &pose, &pattern, 2).unwrap()) > 0);
        assert_eq!(on_box(&simulate_scan(&scene, &pose, &pattern, 3).unwrap()), 0);
    }

    #[test]
    fn pose_inside_box_is_rejected() {
        let scene = Scene::new(vec![Aabb::new(Point::origin(), Point::new(1.0, 1.0, 1.0))], Vec::new());
        let err = simulate_scan(&scene, &Pose::new(0.0, Point::new(0.5, 0.5, 0.5), 0.0), &ScanPattern::default(), 0);
        assert!(matches!(err, Err(Error::PoseInsideBox(_))));
    }

    #[test]
    fn pattern_limits() {
        let bad = ScanPattern { n_elevation: 1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidPattern(_))));
        let bad = ScanPattern { n_azimuth: 3, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(ScanPattern { n_azimuth: 4, n_elevation: 2, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn directions_avoid_axes() {
        for dir in ScanPattern::default().directions(0.0) {
            assert!((0..3).all(|a| dir[a].abs() > 1e-6));
            assert!((dir.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scene_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.txt");
        let (mut scene, poses) = random_room(&RoomSpec::default(), 5);
        scene
            .dynamic_boxes
            .push(DynamicBox { bbox: Aabb::new(Point::new(1.1, 2.2, 0.3), Point::new(1.7, 2.9, 1.0 / 3.0)), visible: (0, 5) });
        save_scene(&path, &scene).unwrap();
        assert_eq!(load_scene(&path).unwrap(), scene);
        let tpath = dir.path().join("traj.txt");
        save_trajectory(&tpath, &poses).unwrap();
        assert_eq!(load_trajectory(&tpath).unwrap(), poses);
    }

    #[test]
    fn minimal_scene_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.txt");
        std::fs::write(&path, "BOX 0 0 0 1 2 3\n").unwrap();
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.static_boxes, vec![Aabb::new(Point::origin(), Point::new(1.0, 2.0, 3.0))]);
        assert!(scene.dynamic_boxes.is_empty());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "# room\nBOX 0 0 0 1 1 1\nBOX 0 0 0 1 x 1\n").unwrap();
        match load_scene(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let tpath = dir.path().join("empty.txt");
        std::fs::write(&tpath, "# nothing\n").unwrap();
        assert!(matches!(load_trajectory(&tpath), Err(Error::EmptyInput { .. })));
    }

    #[test]
    fn simulation_is_deterministic() {
        let (scene, poses) = random_room(&RoomSpec::default(), 9);
        let a = simulate_sequence(&scene, &poses[..3], &ScanPattern::default()).unwrap();
        let b = simulate_sequence(&scene, &poses[..3], &ScanPattern::default()).unwrap();
        assert_eq!(a, b);
        let (scene2, poses2) = random_room(&RoomSpec::default(), 9);
        assert_eq!((scene, poses), (scene2, poses2));
    }

    #[test]
    fn random_room_poses_are_clear() {
        for seed in 0..20 {
            let (scene, poses) = random_room(&RoomSpec::default(), seed);
            scene.validate().unwrap();
            let n = scene.static_boxes.len() - 6;
            assert!((3..=8).contains(&n));
            for p in &poses {
                assert!(scene.visible_boxes(0).all(|b| !b.contains(&p.position)));
            }
        }
    }
}
