//! Classical occupancy mapper: every observed voxel is stored in a hash grid
//! and every ray is walked in full.
//!
//! Serves as the baseline for timing and memory, and as the reference the
//! boundary map is checked against.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::boundary::{compute_boundary_status, BoundaryRecord, BYTES_PER_RECORD};
use crate::dda::RayPath;
use crate::depth_image::generate_depth_image;
use crate::raycast::UpdateSet;
use crate::types::{six_neighbors, MapConfig, OccupancyState, Point, Scan, VoxelKey};
use crate::update::UpdateReport;

/// Which rays the classical mapper casts for a scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RayMode {
    /// One ray per non-empty depth-image pixel, to its nearest return. This
    /// is the same ray set the boundary mapper uses.
    #[default]
    PerPixel,
    /// One ray per raw return. Timing baseline only.
    PerPoint,
}

/// Hash grid of observed voxels; absent keys are unknown.
#[derive(Clone, Debug)]
pub struct DenseGrid {
    resolution: f64,
    store: FxHashMap<VoxelKey, OccupancyState>,
}

impl DenseGrid {
    pub fn new(resolution: f64) -> Self {
        Self { resolution, store: FxHashMap::default() }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    #[inline]
    pub fn state(&self, key: &VoxelKey) -> OccupancyState {
        self.store.get(key).copied().unwrap_or(OccupancyState::Unknown)
    }

    /// Setting `Unknown` forgets the voxel.
    pub fn set(&mut self, key: VoxelKey, state: OccupancyState) {
        if state == OccupancyState::Unknown {
            self.store.remove(&key);
        } else {
            self.store.insert(key, state);
        }
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &OccupancyState)> {
        self.store.iter()
    }

    /// Inclusive key bounds of all stored voxels.
    pub fn key_bounds(&self) -> Option<(VoxelKey, VoxelKey)> {
        let mut keys = self.store.keys();
        let first = *keys.next()?;
        Some(keys.fold((first, first), |(lo, hi), k| {
            (
                VoxelKey::new(lo.i.min(k.i), lo.j.min(k.j), lo.k.min(k.k)),
                VoxelKey::new(hi.i.max(k.i), hi.j.max(k.j), hi.k.max(k.k)),
            )
        }))
    }

    /// Stored voxels charged at the same per-voxel size as a boundary record.
    pub fn estimated_bytes(&self) -> usize {
        self.store.len() * BYTES_PER_RECORD
    }

    /// Writes `<i> <j> <k> <state>` lines sorted by key.
    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut entries: Vec<_> = self.store.iter().collect();
        entries.sort_unstable_by_key(|e| *e.0);
        for (k, s) in entries {
            writeln!(out, "{} {} {} {}", k.i, k.j, k.k, s)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, set: &UpdateSet) -> usize {
        let before = self.store.len();
        for (key, state) in &set.entries {
            self.set(*key, *state);
        }
        self.store.len() - before
    }
}

/// Walks every ray in full. Every voxel passed through becomes free, the
/// voxel holding the return becomes occupied, and occupied wins within the
/// scan.
pub fn cast_full_rays(origin: &Point, ends: &[Point], d: f64) -> UpdateSet {
    ends.par_iter()
        .fold(UpdateSet::default, |mut set, end| {
            let Ok(path) = RayPath::new(*origin, *end, d) else {
                return set;
            };
            let last = path.end_key();
            let mut walked = 0u64;
            for key in path.traverse() {
                if key == last {
                    break;
                }
                walked += 1;
                set.mark(key, OccupancyState::Free);
            }
            set.traversed_count += walked;
            set.mark(last, OccupancyState::Occupied);
            set
        })
        .reduce(UpdateSet::default, UpdateSet::merge)
}

/// Integrates one scan with full ray casting. Voxels touched by this scan
/// take its verdict, replacing whatever earlier scans said.
pub fn integrate_scan_classical(grid: &mut DenseGrid, scan: &Scan, config: &MapConfig, mode: RayMode) -> UpdateReport {
    let total = Instant::now();
    let scan = scan.filtered(config);
    let t = Instant::now();
    let ends: Vec<Point> = match mode {
        RayMode::PerPixel => {
            let image = generate_depth_image(&scan, config.psi);
            image.occupied_pixels().iter().filter_map(|&p| image.get(p as usize).map(|r| r.point)).collect()
        }
        RayMode::PerPoint => scan.points.clone(),
    };
    let t_depth = t.elapsed();
    let t = Instant::now();
    let set = cast_full_rays(&scan.origin, &ends, config.resolution);
    let t_raycast = t.elapsed();
    let t = Instant::now();
    let added = grid.apply(&set);
    let t_update = t.elapsed();
    UpdateReport {
        n_points: scan.points.len(),
        n_rays: ends.len(),
        traversed: set.traversed_count,
        l_size: set.len(),
        f_size: 0,
        records_added: added,
        records_removed: 0,
        record_count: grid.len(),
        t_depth_us: t_depth.as_micros() as u64,
        t_candidates_us: 0,
        t_raycast_us: t_raycast.as_micros() as u64,
        t_update_us: t_update.as_micros() as u64,
        t_total_us: total.elapsed().as_micros() as u64,
        ..Default::default()
    }
}

/// Brute-force boundary classification of a dense grid, sorted by key.
pub fn audit_boundary(grid: &DenseGrid) -> Vec<BoundaryRecord> {
    let mut keys: FxHashSet<VoxelKey> = FxHashSet::default();
    for (key, state) in grid.iter() {
        keys.insert(*key);
        if state.is_free() {
            keys.extend(six_neighbors(key));
        }
    }
    let mut out: Vec<BoundaryRecord> = keys
        .into_iter()
        .filter_map(|key| {
            let neighbors = six_neighbors(&key).map(|n| grid.state(&n));
            compute_boundary_status(grid.state(&key), &neighbors).map(|(class, mask)| BoundaryRecord::new(key, class, mask))
        })
        .collect();
    out.sort_unstable_by_key(|r| r.key);
    out
}
