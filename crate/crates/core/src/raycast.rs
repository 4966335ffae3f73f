//! Truncated ray casting: only the stretches of each ray that lie outside the
//! free-space boundary are walked.
//!
//! For one ray, the candidate boundary records binned on its pixel are
//! reduced to those the ray's voxel walk actually visits, ordered along the
//! ray. A two-state machine then scans them: an exterior record seen while
//! inside free space starts a walk at that voxel, and the next interior
//! record stops it (exclusive). A walk still open at the end runs to the
//! return, whose voxel is always recorded occupied and never freed.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::boundary::{BoundaryClass, BoundaryRecord};
use crate::dda::{Crossing, RayPath};
use crate::depth_image::DepthImage;
use crate::types::{MapConfig, OccupancyState, VoxelKey};

pub use crate::geometry::slab_intersect;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RaySegmentState {
    Interior,
    Exterior,
}

/// Voxel state changes produced by one scan.
///
/// Each key appears once; when a voxel is both walked through and hit,
/// occupied wins.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateSet {
    pub entries: FxHashMap<VoxelKey, OccupancyState>,
    /// Voxels walked (and marked free) summed over rays, with repeats.
    pub traversed_count: u64,
}

impl UpdateSet {
    #[inline]
    pub fn mark(&mut self, key: VoxelKey, state: OccupancyState) {
        self.entries
            .entry(key)
            .and_modify(|s| {
                if state == OccupancyState::Occupied {
                    *s = OccupancyState::Occupied;
                }
            })
            .or_insert(state);
    }

    pub fn merge(mut self, mut other: UpdateSet) -> UpdateSet {
        if other.entries.len() > self.entries.len() {
            std::mem::swap(&mut self, &mut other);
        }
        for (key, state) in other.entries {
            self.mark(key, state);
        }
        self.traversed_count += other.traversed_count;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &VoxelKey) -> Option<OccupancyState> {
        self.entries.get(key).copied()
    }

    /// Entries ordered by key.
    pub fn sorted(&self) -> Vec<(VoxelKey, OccupancyState)> {
        let mut out: Vec<_> = self.entries.iter().map(|(k, s)| (*k, *s)).collect();
        out.sort_unstable_by_key(|e| e.0);
        out
    }
}

/// Keeps the candidates the ray's voxel walk visits and sorts them along the
/// ray. Ties in entry parameter (a ray through an edge or corner) follow the
/// walk's axis order, then key order.
pub fn refine_and_sort(candidates: &[BoundaryRecord], path: &RayPath) -> Vec<(BoundaryRecord, Crossing)> {
    let mut out: Vec<(BoundaryRecord, Crossing)> =
        candidates.iter().filter_map(|r| path.crossing(&r.key).map(|c| (*r, c))).collect();
    out.sort_unstable_by(|a, b| a.1.cmp_order(&b.1).then_with(|| a.0.key.cmp(&b.0.key)));
    out.dedup_by(|a, b| a.0.key == b.0.key);
    out
}

/// Runs the interior/exterior state machine along one ray, calling `visit`
/// for every voxel walked. Returns the number of exterior stretches.
///
/// The machine starts inside when the origin voxel is free; otherwise it
/// starts outside with a walk from the origin voxel.
pub fn walk_exterior(
    refined: &[(BoundaryRecord, Crossing)],
    path: &RayPath,
    origin_state: OccupancyState,
    mut visit: impl FnMut(VoxelKey),
) -> usize {
    let end = path.end_key();
    let mut walk = |from: VoxelKey, stop: Option<VoxelKey>| {
        for key in path.traverse_from(from) {
            if Some(key) == stop || key == end {
                break;
            }
            visit(key);
        }
    };

    let mut state = RaySegmentState::Interior;
    let mut open_at = None;
    let mut segments = 0;
    if origin_state != OccupancyState::Free {
        state = RaySegmentState::Exterior;
        open_at = Some(path.start_key());
        segments = 1;
    }
    for (record, _) in refined {
        match state {
            RaySegmentState::Interior if record.class.is_exterior() => {
                state = RaySegmentState::Exterior;
                open_at = Some(record.key);
                segments += 1;
            }
            RaySegmentState::Exterior if record.class == BoundaryClass::Interior => {
                state = RaySegmentState::Interior;
                if let Some(from) = open_at.take() {
                    walk(from, Some(record.key));
                }
            }
            _ => {}
        }
    }
    if let Some(from) = open_at {
        walk(from, None);
    }
    segments
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RayOutcome {
    /// Walked voxels, in ray order; each becomes free.
    pub traversed: Vec<VoxelKey>,
    /// Voxel containing the return; becomes occupied.
    pub endpoint: VoxelKey,
    pub exterior_segments: usize,
}

pub fn process_ray(refined: &[(BoundaryRecord, Crossing)], path: &RayPath, origin_state: OccupancyState) -> RayOutcome {
    let mut traversed = Vec::new();
    let exterior_segments = walk_exterior(refined, path, origin_state, |k| traversed.push(k));
    RayOutcome { traversed, endpoint: path.end_key(), exterior_segments }
}

/// Casts every ray of the depth image against its binned candidates.
///
/// `origin_state` is the pre-scan state of the sensor's voxel.
pub fn truncated_ray_casting(image: &DepthImage, origin_state: OccupancyState, config: &MapConfig) -> UpdateSet {
    let origin = image.origin();
    let d = config.resolution;
    image
        .occupied_pixels()
        .par_iter()
        .fold(UpdateSet::default, |mut set, &pixel| {
            let pixel = pixel as usize;
            let Some(ret) = image.get(pixel) else {
                return set;
            };
            let Ok(path) = RayPath::new(origin, ret.point, d) else {
                return set;
            };
            let refined = refine_and_sort(image.candidates(pixel), &path);
            let mut walked = 0u64;
            walk_exterior(&refined, &path, origin_state, |key| {
                walked += 1;
                set.mark(key, OccupancyState::Free);
            });
            set.traversed_count += walked;
            set.mark(path.end_key(), OccupancyState::Occupied);
            set
        })
        .reduce(UpdateSet::default, UpdateSet::merge)
}
