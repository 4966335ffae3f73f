//! Per-scan update of the boundary map.
//!
//! A scan runs through five stages: slide the column list under the sensor,
//! pull the boundary records within range, bin them onto the depth image,
//! cast truncated rays, and rewrite the boundary records around every voxel
//! whose state changed.

use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::boundary::{compute_boundary_status, BoundaryMap, BoundaryRecord};
use crate::depth_image::{generate_depth_image, populate_candidates};
use crate::error::Result;
use crate::raycast::{truncated_ray_casting, UpdateSet};
use crate::types::{voxel_center, world_to_voxel, MapConfig, OccupancyState, Point, ProjectionAxis, Scan, VoxelKey};

/// Columns under the sensor's circular footprint, kept up to date as the
/// sensor moves.
#[derive(Clone, Debug)]
pub struct CellsList {
    cells: FxHashSet<(i32, i32)>,
    center: Option<(f64, f64)>,
    resolution: f64,
}

impl CellsList {
    pub fn new(resolution: f64) -> Self {
        Self { cells: FxHashSet::default(), center: None, resolution }
    }

    pub fn cells(&self) -> &FxHashSet<(i32, i32)> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, column: &(i32, i32)) -> bool {
        self.cells.contains(column)
    }

    pub fn center(&self) -> Option<(f64, f64)> {
        self.center
    }
}

#[derive(Clone, Copy)]
struct Disk {
    cx: f64,
    cy: f64,
    radius: f64,
    d: f64,
}

impl Disk {
    #[inline]
    fn contains(&self, a: i32, b: i32) -> bool {
        let dx = (a as f64 + 0.5) * self.d - self.cx;
        let dy = (b as f64 + 0.5) * self.d - self.cy;
        dx * dx + dy * dy <= self.radius * self.radius
    }

    fn rows(&self) -> (i32, i32) {
        (((self.cy - self.radius) / self.d - 0.5).floor() as i32 - 1, ((self.cy + self.radius) / self.d - 0.5).ceil() as i32 + 1)
    }

    /// Inclusive column range of row `b` inside the disk.
    fn span(&self, b: i32) -> Option<(i32, i32)> {
        let dy = (b as f64 + 0.5) * self.d - self.cy;
        let h2 = self.radius * self.radius - dy * dy;
        if h2 < -1e-9 * self.radius * self.radius {
            return None;
        }
        let half = h2.max(0.0).sqrt();
        let mut lo = ((self.cx - half) / self.d - 0.5).ceil() as i32;
        let mut hi = ((self.cx + half) / self.d - 0.5).floor() as i32;
        // The analytic bounds can be off by one; the distance test decides.
        while self.contains(lo - 1, b) {
            lo -= 1;
        }
        while lo <= hi && !self.contains(lo, b) {
            lo += 1;
        }
        while self.contains(hi + 1, b) {
            hi += 1;
        }
        while hi >= lo && !self.contains(hi, b) {
            hi -= 1;
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// Moves the column list to a disk of radius `range + d` around
/// `origin_xy`. Only columns entering or leaving the disk are touched.
pub fn update_cells_list(k: &mut CellsList, origin_xy: (f64, f64), range: f64) {
    let d = k.resolution;
    let new = Disk { cx: origin_xy.0, cy: origin_xy.1, radius: range + d, d };
    let old = match k.center {
        Some(c) if c == origin_xy => return,
        Some(c) => Some(Disk { cx: c.0, cy: c.1, ..new }),
        None => None,
    };
    let (mut b0, mut b1) = new.rows();
    if let Some(old) = &old {
        let (o0, o1) = old.rows();
        b0 = b0.min(o0);
        b1 = b1.max(o1);
    }
    for b in b0..=b1 {
        let was = old.as_ref().and_then(|o| o.span(b));
        let now = new.span(b);
        if let Some((l1, h1)) = was {
            match now {
                None => (l1..=h1).for_each(|a| {
                    k.cells.remove(&(a, b));
                }),
                Some((l2, h2)) => {
                    for a in (l1..=h1.min(l2 - 1)).chain((l1.max(h2 + 1))..=h1) {
                        k.cells.remove(&(a, b));
                    }
                }
            }
        }
        if let Some((l2, h2)) = now {
            match was {
                None => k.cells.extend((l2..=h2).map(|a| (a, b))),
                Some((l1, h1)) => {
                    k.cells.extend((l2..=h2.min(l1 - 1)).chain((l2.max(h1 + 1))..=h2).map(|a| (a, b)));
                }
            }
        }
    }
    k.center = Some(origin_xy);
}

/// Records in the listed columns whose voxel center lies within
/// `range + √3·d/2` of the origin.
pub fn get_boundary_voxels_in_fov(map: &BoundaryMap, k: &CellsList, origin: &Point, config: &MapConfig) -> Vec<BoundaryRecord> {
    let d = map.resolution();
    let limit = config.range + config.voxel_circumradius();
    let limit2 = limit * limit;
    let columns: Vec<&(i32, i32)> = k.cells().iter().collect();
    columns
        .par_iter()
        .fold(Vec::new, |mut acc, column| {
            if let Some(cell) = map.column(**column) {
                acc.extend(cell.records.iter().filter(|r| (voxel_center(&r.key, d) - origin).norm_squared() <= limit2));
            }
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        })
}

type Column = (i32, i32);

/// Voxels whose boundary status may change in one update, with the states
/// needed to recompute them. Both are kept per column, sorted by height.
#[derive(Clone, Debug, Default)]
pub struct InflatedUpdateSpace {
    axis: ProjectionAxis,
    /// Changed voxels and their face neighbors.
    pub voxels: FxHashMap<Column, Vec<i32>>,
    /// Post-update state of every voxel in `voxels` and of their neighbors.
    pub state_cache: FxHashMap<Column, Vec<(i32, OccupancyState)>>,
}

/// The four columns sharing a face with `c`, in plane-axis order −a, +a, −b, +b.
fn lateral(c: Column) -> [Column; 4] {
    [(c.0 - 1, c.1), (c.0 + 1, c.1), (c.0, c.1 - 1), (c.0, c.1 + 1)]
}

/// Grows per-column height sets by one voxel in all six directions.
fn inflate(core: &FxHashMap<Column, Vec<i32>>) -> FxHashMap<Column, Vec<i32>> {
    let mut out: FxHashMap<Column, Vec<i32>> = FxHashMap::default();
    for (column, heights) in core {
        let own = out.entry(*column).or_default();
        for h in heights {
            own.extend([h - 1, *h, h + 1]);
        }
        for side in lateral(*column) {
            out.entry(side).or_default().extend_from_slice(heights);
        }
    }
    for heights in out.values_mut() {
        heights.sort_unstable();
        heights.dedup();
    }
    out
}

impl InflatedUpdateSpace {
    /// Builds the space from the pre-update map. Entries of `set` that leave
    /// a voxel's state as it was are dropped first: they cannot change any
    /// status.
    pub fn build(map: &BoundaryMap, set: &UpdateSet) -> Result<Self> {
        let axis = map.axis();
        let mut entries: FxHashMap<Column, Vec<(i32, OccupancyState)>> = FxHashMap::default();
        for (key, state) in &set.entries {
            entries.entry(axis.column_of(key)).or_default().push((axis.height_of(key), *state));
        }
        let entries: Vec<(Column, Vec<(i32, OccupancyState)>)> = entries
            .into_iter()
            .map(|(c, mut v)| {
                v.sort_unstable_by_key(|e| e.0);
                (c, v)
            })
            .collect();

        let changed = entries
            .par_iter()
            .map(|(column, updates)| {
                let heights: Vec<i32> = updates.iter().map(|e| e.0).collect();
                let before = map.query_column(*column, &heights)?;
                let moved: Vec<i32> =
                    updates.iter().zip(before).filter(|((_, after), before)| after != before).map(|((h, _), _)| *h).collect();
                Ok((*column, moved))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|(_, moved)| !moved.is_empty())
            .collect();
        let voxels = inflate(&changed);
        let domain: Vec<(Column, Vec<i32>)> = inflate(&voxels).into_iter().collect();
        let updates: FxHashMap<Column, Vec<(i32, OccupancyState)>> = entries.into_iter().collect();

        let state_cache = domain
            .par_iter()
            .map(|(column, heights)| {
                let mut states = map.query_column(*column, heights)?;
                if let Some(ups) = updates.get(column) {
                    let mut i = 0;
                    for (h, s) in ups {
                        while i < heights.len() && heights[i] < *h {
                            i += 1;
                        }
                        if i < heights.len() && heights[i] == *h {
                            states[i] = *s;
                        }
                    }
                }
                Ok((*column, heights.iter().copied().zip(states).collect()))
            })
            .collect::<Result<FxHashMap<_, _>>>()?;
        Ok(Self { axis, voxels, state_cache })
    }

    pub fn len(&self) -> usize {
        self.voxels.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn state(&self, key: &VoxelKey) -> Option<OccupancyState> {
        lookup(self.state_cache.get(&self.axis.column_of(key))?, self.axis.height_of(key))
    }

    /// New boundary records of the voxels in one column of the space,
    /// ascending by height.
    fn recompute_column(&self, column: Column, heights: &[i32]) -> Vec<BoundaryRecord> {
        let own = &self.state_cache[&column];
        let sides = lateral(column).map(|c| &self.state_cache[&c]);
        let axis_index = self.axis.index();
        let (pa, pb) = self.axis.plane_axes();
        heights
            .iter()
            .filter_map(|&h| {
                let at = |states: &Vec<(i32, OccupancyState)>, h| lookup(states, h).expect("state cache covers neighbors");
                let mut neighbors = [OccupancyState::Unknown; 6];
                neighbors[2 * axis_index] = at(own, h - 1);
                neighbors[2 * axis_index + 1] = at(own, h + 1);
                neighbors[2 * pa] = at(sides[0], h);
                neighbors[2 * pa + 1] = at(sides[1], h);
                neighbors[2 * pb] = at(sides[2], h);
                neighbors[2 * pb + 1] = at(sides[3], h);
                compute_boundary_status(at(own, h), &neighbors)
                    .map(|(class, mask)| BoundaryRecord::new(self.axis.compose(column, h), class, mask))
            })
            .collect()
    }

    /// New boundary records for the voxels of the space, grouped by column.
    pub fn recompute(&self) -> Vec<(Column, Vec<BoundaryRecord>)> {
        let columns: Vec<(&Column, &Vec<i32>)> = self.voxels.iter().collect();
        columns.par_iter().map(|(column, heights)| (**column, self.recompute_column(**column, heights))).collect()
    }
}

fn lookup(states: &[(i32, OccupancyState)], h: i32) -> Option<OccupancyState> {
    states.binary_search_by_key(&h, |e| e.0).ok().map(|i| states[i].1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundaryDelta {
    pub f_size: usize,
    pub records_added: usize,
    pub records_removed: usize,
}

/// Applies one scan's state changes to the map.
///
/// All states are read before any record is touched. Records of voxels in
/// the inflated space are removed and recomputed, column by column; every
/// column touched is checked afterwards and a broken free run is reported
/// as an error.
pub fn update_boundary_map(map: &mut BoundaryMap, set: &UpdateSet) -> Result<BoundaryDelta> {
    if set.is_empty() {
        return Ok(BoundaryDelta::default());
    }
    let space = InflatedUpdateSpace::build(map, set)?;
    let mut delta = BoundaryDelta { f_size: space.len(), ..Default::default() };
    for (column, add) in space.recompute() {
        let (removed, added) = map.rewrite_column(column, &space.voxels[&column], &add)?;
        delta.records_removed += removed;
        delta.records_added += added;
        map.check_column(column)?;
    }
    Ok(delta)
}

/// Statistics of one integrated scan. Times are wall-clock microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateReport {
    pub scan_index: usize,
    pub n_points: usize,
    pub n_rays: usize,
    /// Voxels walked over all rays, counted once per ray.
    pub traversed: u64,
    pub l_size: usize,
    pub f_size: usize,
    pub records_added: usize,
    pub records_removed: usize,
    /// Stored records (boundary) or stored voxels (dense) after the scan.
    pub record_count: usize,
    pub t_depth_us: u64,
    pub t_candidates_us: u64,
    pub t_raycast_us: u64,
    pub t_update_us: u64,
    pub t_total_us: u64,
}

impl UpdateReport {
    pub const CSV_HEADER: &'static str = "scan_index,n_points,n_rays,traversed,L_size,F_size,records_added,records_removed,record_count,t_depth_us,t_candidates_us,t_raycast_us,t_update_us,t_total_us";
    /// Number of leading columns that do not depend on timing.
    pub const CSV_STABLE_COLUMNS: usize = 9;

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scan_index,
            self.n_points,
            self.n_rays,
            self.traversed,
            self.l_size,
            self.f_size,
            self.records_added,
            self.records_removed,
            self.record_count,
            self.t_depth_us,
            self.t_candidates_us,
            self.t_raycast_us,
            self.t_update_us,
            self.t_total_us
        )
    }
}

/// Boundary map plus the state carried between scans.
#[derive(Clone, Debug)]
pub struct BoundaryMapper {
    config: MapConfig,
    map: BoundaryMap,
    cells: CellsList,
    scans: usize,
}

impl BoundaryMapper {
    pub fn new(config: MapConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            map: BoundaryMap::new(config.resolution, config.projection_axis),
            cells: CellsList::new(config.resolution),
            config,
            scans: 0,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn map(&self) -> &BoundaryMap {
        &self.map
    }

    /// Direct access to the stored records, for tests that tamper with them.
    pub fn map_mut(&mut self) -> &mut BoundaryMap {
        &mut self.map
    }

    pub fn cells(&self) -> &CellsList {
        &self.cells
    }

    pub fn integrate_scan(&mut self, scan: &Scan) -> Result<UpdateReport> {
        let total = Instant::now();
        let config = self.config;
        let scan = scan.filtered(&config);
        let origin = scan.origin;

        let t = Instant::now();
        let mut image = generate_depth_image(&scan, config.psi);
        let t_depth = t.elapsed();

        let t = Instant::now();
        let (a, b) = config.projection_axis.plane_axes();
        update_cells_list(&mut self.cells, (origin[a], origin[b]), config.range);
        let in_fov = get_boundary_voxels_in_fov(&self.map, &self.cells, &origin, &config);
        populate_candidates(&mut image, &in_fov, &origin, &config);
        let t_candidates = t.elapsed();

        let t = Instant::now();
        let origin_state = self.map.query_state(&world_to_voxel(&origin, config.resolution))?;
        let set = truncated_ray_casting(&image, origin_state, &config);
        let t_raycast = t.elapsed();

        let t = Instant::now();
        let delta = update_boundary_map(&mut self.map, &set)?;
        let t_update = t.elapsed();

        let report = UpdateReport {
            scan_index: self.scans,
            n_points: scan.points.len(),
            n_rays: image.ray_count(),
            traversed: set.traversed_count,
            l_size: set.len(),
            f_size: delta.f_size,
            records_added: delta.records_added,
            records_removed: delta.records_removed,
            record_count: self.map.record_count(),
            t_depth_us: t_depth.as_micros() as u64,
            t_candidates_us: t_candidates.as_micros() as u64,
            t_raycast_us: t_raycast.as_micros() as u64,
            t_update_us: t_update.as_micros() as u64,
            t_total_us: total.elapsed().as_micros() as u64,
        };
        self.scans += 1;
        Ok(report)
    }
}
