use crate::types::{Point, Vector};

/// Axis-aligned box, closed on all faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a] < self.max[a] && self.min[a].is_finite() && self.max[a].is_finite())
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }
}

/// Slab-method ray/box intersection.
///
/// Returns the parametric interval `(t_entry, t_exit)` along
/// `origin + t · direction` over which the ray is inside the closed box, or
/// `None` when the ray misses it or the box lies entirely behind the origin.
/// `t_entry` is negative when the origin is inside the box. With a unit
/// `direction` the parameters are distances; any nonzero direction works and
/// scales them. Zero components are handled as parallel slabs.
pub fn slab_intersect(origin: &Point, direction: &Vector, box_min: &Point, box_max: &Point) -> Option<(f64, f64)> {
    let mut t_entry = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        let o = origin[a];
        let dir = direction[a];
        if dir == 0.0 {
            if o < box_min[a] || o > box_max[a] {
                return None;
            }
            continue;
        }
        let t0 = (box_min[a] - o) / dir;
        let t1 = (box_max[a] - o) / dir;
        let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_entry = t_entry.max(near);
        t_exit = t_exit.min(far);
        if t_entry > t_exit {
            return None;
        }
    }
    if t_exit < 0.0 {
        return None;
    }
    Some((t_entry, t_exit))
}
