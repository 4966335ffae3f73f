//! Voxel traversal along a ray segment (Amanatides–Woo DDA).
//!
//! [`RayPath`] describes the segment `origin + t · (end − origin)`, `t ∈ [0, 1]`.
//! The walk starts in the voxel containing `origin` and stops at the voxel
//! containing `end`. Plane crossings are visited in `(t, axis)` order, so a
//! ray through an edge or corner steps x before y before z.
//!
//! [`RayPath::crossing`] answers "does the walk visit this voxel, and when" in
//! O(1) without walking. It evaluates the same plane-crossing expressions as
//! the walk, so the two agree exactly, ties included. The truncated caster
//! relies on this to jump into the middle of a ray.

use std::cmp::Ordering;

use crate::error::Error;
use crate::types::{lattice_plane, world_to_voxel, Point, Vector, VoxelKey};

/// The plane crossing through which the walk enters a voxel.
///
/// The origin voxel has `t = −∞` and `axis = −1`. Crossings are totally
/// ordered by `(t, axis)`, which is exactly the order of the walk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub axis: i8,
}

impl Crossing {
    pub const ORIGIN: Crossing = Crossing { t: f64::NEG_INFINITY, axis: -1 };

    #[inline]
    pub fn cmp_order(&self, other: &Crossing) -> Ordering {
        self.t.total_cmp(&other.t).then(self.axis.cmp(&other.axis))
    }

    #[inline]
    fn before(&self, other: &Crossing) -> bool {
        self.cmp_order(other) == Ordering::Less
    }
}

#[derive(Clone, Debug)]
pub struct RayPath {
    origin: Point,
    end_point: Point,
    inv_delta: [f64; 3],
    d: f64,
    start: VoxelKey,
    end: VoxelKey,
    step: [i32; 3],
    end_entry: Option<Crossing>,
}

impl RayPath {
    pub fn new(origin: Point, end: Point, d: f64) -> Result<Self, Error> {
        let delta = end - origin;
        if delta == Vector::zeros() {
            return Err(Error::DegenerateRay);
        }
        let step = [0, 1, 2].map(|a| match delta[a] {
            x if x > 0.0 => 1,
            x if x < 0.0 => -1,
            _ => 0,
        });
        let mut path = Self {
            origin,
            end_point: end,
            inv_delta: [0, 1, 2].map(|a| 1.0 / delta[a]),
            d,
            start: world_to_voxel(&origin, d),
            end: world_to_voxel(&end, d),
            step,
            end_entry: None,
        };
        path.end_entry = path.raw_crossing(&path.end);
        Ok(path)
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn end_point(&self) -> Point {
        self.end_point
    }

    pub fn start_key(&self) -> VoxelKey {
        self.start
    }

    pub fn end_key(&self) -> VoxelKey {
        self.end
    }

    pub fn resolution(&self) -> f64 {
        self.d
    }

    /// Shared by the walk and by `crossing`, so the two agree bit for bit.
    #[inline]
    fn plane_t(&self, axis: usize, plane: i32) -> f64 {
        (lattice_plane(plane, self.d) - self.origin[axis]) * self.inv_delta[axis]
    }

    /// Parameter at which the walk leaves `key` through its face on `axis`.
    #[inline]
    fn exit_t(&self, key: &VoxelKey, axis: usize) -> f64 {
        match self.step[axis] {
            0 => f64::INFINITY,
            s if s > 0 => self.plane_t(axis, key.axis(axis) + 1),
            _ => self.plane_t(axis, key.axis(axis)),
        }
    }

    fn raw_crossing(&self, key: &VoxelKey) -> Option<Crossing> {
        let mut entry = Crossing::ORIGIN;
        let mut exit = Crossing { t: f64::INFINITY, axis: 3 };
        for a in 0..3 {
            let n = key.axis(a) - self.start.axis(a);
            let s = self.step[a];
            if s == 0 {
                if n != 0 {
                    return None;
                }
                continue;
            }
            if n * s < 0 {
                return None;
            }
            if n != 0 {
                let plane = if s > 0 { key.axis(a) } else { key.axis(a) + 1 };
                let c = Crossing { t: self.plane_t(a, plane), axis: a as i8 };
                if entry.before(&c) {
                    entry = c;
                }
            }
            let c = Crossing { t: self.exit_t(key, a), axis: a as i8 };
            if c.before(&exit) {
                exit = c;
            }
        }
        (entry.before(&exit) && entry.t <= 1.0).then_some(entry)
    }

    /// Entry crossing of `key` if the walk visits it, else `None`.
    pub fn crossing(&self, key: &VoxelKey) -> Option<Crossing> {
        let entry = self.raw_crossing(key)?;
        if *key != self.end {
            if let Some(end_entry) = self.end_entry {
                if !entry.before(&end_entry) {
                    return None;
                }
            }
        }
        Some(entry)
    }

    /// Walk from the origin voxel to the end voxel.
    pub fn traverse(&self) -> Traversal<'_> {
        self.traverse_from(self.start)
    }

    /// Walk starting at `key`, which must lie on the path.
    pub fn traverse_from(&self, key: VoxelKey) -> Traversal<'_> {
        let t_max = [0, 1, 2].map(|a| self.exit_t(&key, a));
        Traversal { path: self, current: key, t_max, done: false }
    }
}

pub struct Traversal<'a> {
    path: &'a RayPath,
    current: VoxelKey,
    t_max: [f64; 3],
    done: bool,
}

impl Iterator for Traversal<'_> {
    type Item = VoxelKey;

    #[inline]
    fn next(&mut self) -> Option<VoxelKey> {
        if self.done {
            return None;
        }
        let out = self.current;
        if out == self.path.end {
            self.done = true;
            return Some(out);
        }
        let mut axis = 0;
        if self.t_max[1] < self.t_max[axis] {
            axis = 1;
        }
        if self.t_max[2] < self.t_max[axis] {
            axis = 2;
        }
        if self.t_max[axis] > 1.0 {
            self.done = true;
            return Some(out);
        }
        let next = self.current.axis(axis) + self.path.step[axis];
        self.current.set_axis(axis, next);
        self.t_max[axis] = self.path.exit_t(&self.current, axis);
        Some(out)
    }
}

/// Every voxel the segment `origin → end` passes through, in ray order,
/// origin voxel first and end voxel last.
///
/// If rounding makes the walk run past the end voxel without entering it,
/// the end voxel is appended so the result always contains it.
pub fn dda_traverse(origin: &Point, end: &Point, d: f64) -> Result<Vec<VoxelKey>, Error> {
    let path = RayPath::new(*origin, *end, d)?;
    let mut keys: Vec<VoxelKey> = path.traverse().collect();
    if keys.last() != Some(&path.end_key()) {
        keys.push(path.end_key());
    }
    Ok(keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z)
    }

    #[test]
    fn axis_aligned_ray() {
        let keys = dda_traverse(&p(0.25, 0.25, 0.25), &p(1.75, 0.25, 0.25), 0.5).unwrap();
        assert_eq!(keys, vec![VoxelKey::new(0, 0, 0), VoxelKey::new(1, 0, 0), VoxelKey::new(2, 0, 0), VoxelKey::new(3, 0, 0)]);
    }

    #[test]
    fn same_voxel_is_single_element() {
        let keys = dda_traverse(&p(0.1, 0.1, 0.1), &p(0.4, 0.3, 0.2), 0.5).unwrap();
        assert_eq!(keys, vec![VoxelKey::new(0, 0, 0)]);
    }

    #[test]
    fn degenerate_ray_is_rejected() {
        assert!(matches!(dda_traverse(&p(1.0, 1.0, 1.0), &p(1.0, 1.0, 1.0), 0.5), Err(Error::DegenerateRay)));
    }

    #[test]
    fn corner_ties_step_x_first() {
        // Passes exactly through the edge at x = y = 0.5.
        let keys = dda_traverse(&p(0.25, 0.25, 0.1), &p(0.75, 0.75, 0.1), 0.5).unwrap();
        assert_eq!(keys, vec![VoxelKey::new(0, 0, 0), VoxelKey::new(1, 0, 0), VoxelKey::new(1, 1, 0)]);
    }

    #[test]
    fn end_on_plane_going_negative_stays_in_nearer_voxel() {
        let keys = dda_traverse(&p(1.2, 0.1, 0.1), &p(0.5, 0.1, 0.1), 0.5).unwrap();
        assert_eq!(keys, vec![VoxelKey::new(2, 0, 0), VoxelKey::new(1, 0, 0)]);
    }

    /// Dense sampler oracle: visit points every d/100 along the segment.
    fn sampled_voxels(origin: &Point, end: &Point, d: f64) -> BTreeSet<VoxelKey> {
        let len = (end - origin).norm();
        let n = (len / (d / 100.0)).ceil() as usize;
        (0..=n).map(|s| origin + (end - origin) * (s as f64 / n as f64)).map(|q| world_to_voxel(&q, d)).collect()
    }

    fn random_ray(rng: &mut ChaCha8Rng) -> (Point, Point) {
        let mut q = || p(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        (q(), q())
    }

    #[test]
    fn matches_dense_sampler_on_random_rays() {
        let d = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut compared = 0;
        while compared < 1000 {
            let (o, e) = random_ray(&mut rng);
            let keys = dda_traverse(&o, &e, d).unwrap();
            for w in keys.windows(2) {
                let l1 = (w[0].i - w[1].i).abs() + (w[0].j - w[1].j).abs() + (w[0].k - w[1].k).abs();
                assert_eq!(l1, 1, "non-unit step on {o} -> {e}");
            }
            let walked: BTreeSet<_> = keys.iter().copied().collect();
            assert_eq!(walked.len(), keys.len());
            // The sampler can skip a voxel the ray only clips by less than
            // d/100; nudging the ray and checking stability filters those.
            let sampled = sampled_voxels(&o, &e, d);
            let nudged = sampled_voxels(&(o + Vector::repeat(1e-7)), &(e + Vector::repeat(1e-7)), d);
            if sampled != nudged {
                continue;
            }
            if sampled != walked {
                // A clipped corner shorter than the sample step; the walk
                // must be a superset in that case.
                assert!(sampled.is_subset(&walked), "{o} -> {e}");
                continue;
            }
            compared += 1;
        }
    }

    #[test]
    fn crossing_agrees_with_walk() {
        let d = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let (o, e) = random_ray(&mut rng);
            let path = RayPath::new(o, e, d).unwrap();
            let walked: Vec<VoxelKey> = path.traverse().collect();
            let mut prev = None::<Crossing>;
            for key in &walked {
                let c = path.crossing(key).expect("walked voxel must have a crossing");
                if let Some(prev) = prev {
                    assert!(prev.before(&c));
                }
                prev = Some(c);
            }
            let set: BTreeSet<_> = walked.iter().copied().collect();
            let (a, b) = (world_to_voxel(&o, d), world_to_voxel(&e, d));
            for i in a.i.min(b.i) - 1..=a.i.max(b.i) + 1 {
                for j in a.j.min(b.j) - 1..=a.j.max(b.j) + 1 {
                    for k in a.k.min(b.k) - 1..=a.k.max(b.k) + 1 {
                        let key = VoxelKey::new(i, j, k);
                        assert_eq!(path.crossing(&key).is_some(), set.contains(&key), "{key} on {o} -> {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn crossing_agrees_with_walk_on_lattice_aligned_rays() {
        // Rays through lattice edges and corners exercise the tie rule.
        let d = 0.5;
        let pts = [p(0.0, 0.0, 0.0), p(1.0, 1.0, 1.0), p(1.5, 0.5, 0.0), p(-1.0, 2.0, 0.5), p(0.5, 0.5, 0.5), p(2.0, -1.0, 1.0)];
        for o in &pts {
            for e in &pts {
                if o == e {
                    continue;
                }
                let path = RayPath::new(*o, *e, d).unwrap();
                let walked: BTreeSet<VoxelKey> = path.traverse().collect();
                for i in -4..=5 {
                    for j in -4..=5 {
                        for k in -4..=5 {
                            let key = VoxelKey::new(i, j, k);
                            assert_eq!(path.crossing(&key).is_some(), walked.contains(&key), "{key} on {o} -> {e}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn traverse_from_midpoint_continues_the_walk() {
        let path = RayPath::new(p(0.13, 0.71, -0.4), p(2.9, -1.3, 1.7), 0.25).unwrap();
        let full: Vec<VoxelKey> = path.traverse().collect();
        for (n, key) in full.iter().enumerate() {
            let tail: Vec<VoxelKey> = path.traverse_from(*key).collect();
            assert_eq!(tail, full[n..]);
        }
    }
}
