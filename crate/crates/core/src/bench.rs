//! Sequence runner, statistics and the dense-versus-boundary comparison.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::boundary::{BoundaryClass, BoundaryMap, BoundaryRecord, MemoryStats};
use crate::dense::{audit_boundary, integrate_scan_classical, DenseGrid, RayMode};
use crate::error::Result;
use crate::types::{MapConfig, OccupancyState, Scan, VoxelKey};
use crate::update::{BoundaryMapper, UpdateReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MapperKind {
    Dense,
    #[default]
    Boundary,
}

impl MapperKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dense" => Some(MapperKind::Dense),
            "boundary" => Some(MapperKind::Boundary),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Mapper {
    Dense { grid: DenseGrid, config: MapConfig, rays: RayMode, scans: usize },
    Boundary(BoundaryMapper),
}

impl Mapper {
    pub fn new(kind: MapperKind, config: MapConfig, rays: RayMode) -> Result<Self> {
        config.validate()?;
        Ok(match kind {
            MapperKind::Dense => Mapper::Dense { grid: DenseGrid::new(config.resolution), config, rays, scans: 0 },
            MapperKind::Boundary => Mapper::Boundary(BoundaryMapper::new(config)?),
        })
    }

    pub fn integrate(&mut self, scan: &Scan) -> Result<UpdateReport> {
        match self {
            Mapper::Dense { grid, config, rays, scans } => {
                let mut report = integrate_scan_classical(grid, scan, config, *rays);
                report.scan_index = *scans;
                *scans += 1;
                Ok(report)
            }
            Mapper::Boundary(m) => m.integrate_scan(scan),
        }
    }

    pub fn estimated_bytes(&self) -> usize {
        match self {
            Mapper::Dense { grid, .. } => grid.estimated_bytes(),
            Mapper::Boundary(m) => m.map().memory_stats().estimated_bytes,
        }
    }

    /// Dense maps export `<i> <j> <k> <state>`, boundary maps
    /// `<i> <j> <k> <class> <mask>`, both sorted by key.
    pub fn export<W: Write>(&self, out: W) -> std::io::Result<()> {
        match self {
            Mapper::Dense { grid, .. } => grid.export(out),
            Mapper::Boundary(m) => m.map().export(out),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Self { mean: v.iter().sum::<f64>() / n as f64, median }
    }
}

/// Statistics of a whole run. Aggregates skip the first (warm-up) scan
/// when there is more than one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<UpdateReport>,
    pub total_us: Aggregate,
    pub update_us: Aggregate,
    pub traversed: Aggregate,
    pub peak_record_count: usize,
    pub estimated_bytes: usize,
    /// Boundary maps only.
    pub memory: Option<MemoryStats>,
}

impl RunSummary {
    pub fn new(rows: Vec<UpdateReport>, mapper: &Mapper) -> Self {
        let steady = if rows.len() > 1 { &rows[1..] } else { &rows[..] };
        let agg = |f: fn(&UpdateReport) -> f64| Aggregate::of(&steady.iter().map(f).collect::<Vec<_>>());
        Self {
            total_us: agg(|r| r.t_total_us as f64),
            update_us: agg(|r| r.t_update_us as f64),
            traversed: agg(|r| r.traversed as f64),
            peak_record_count: rows.iter().map(|r| r.record_count).max().unwrap_or(0),
            estimated_bytes: mapper.estimated_bytes(),
            memory: match mapper {
                Mapper::Boundary(m) => Some(m.map().memory_stats()),
                Mapper::Dense { .. } => None,
            },
            rows,
        }
    }

    /// Traversed voxels of each scan relative to the first.
    pub fn traversed_ratios(&self) -> Vec<f64> {
        let first = self.rows.first().map_or(0, |r| r.traversed);
        self.rows.iter().map(|r| if first == 0 { 0.0 } else { r.traversed as f64 / first as f64 }).collect()
    }

    /// One CSV row per scan, then `#`-prefixed summary lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", UpdateReport::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_row())?;
        }
        writeln!(out, "# scans,{}", self.rows.len())?;
        writeln!(out, "# total_us_mean,{:.1}", self.total_us.mean)?;
        writeln!(out, "# total_us_median,{:.1}", self.total_us.median)?;
        writeln!(out, "# update_us_mean,{:.1}", self.update_us.mean)?;
        writeln!(out, "# traversed_mean,{:.1}", self.traversed.mean)?;
        writeln!(out, "# traversed_median,{:.1}", self.traversed.median)?;
        let ratios: Vec<String> = self.traversed_ratios().iter().map(|r| format!("{r:.6}")).collect();
        writeln!(out, "# traversed_ratio_vs_first,{}", ratios.join(","))?;
        writeln!(out, "# peak_record_count,{}", self.peak_record_count)?;
        writeln!(out, "# estimated_bytes,{}", self.estimated_bytes)?;
        if let Some(m) = &self.memory {
            writeln!(
                out,
                "# columns,{}\n# interior,{}\n# exterior_unknown,{}\n# exterior_occupied,{}",
                m.column_count, m.interior, m.exterior_unknown, m.exterior_occupied
            )?;
        }
        Ok(())
    }
}

/// Feeds every scan through a fresh mapper.
pub fn run_sequence(scans: &[Scan], kind: MapperKind, config: MapConfig, rays: RayMode) -> Result<(Mapper, RunSummary)> {
    let mut mapper = Mapper::new(kind, config, rays)?;
    let mut rows = Vec::with_capacity(scans.len());
    for scan in scans {
        rows.push(mapper.integrate(scan)?);
    }
    let summary = RunSummary::new(rows, &mapper);
    Ok((mapper, summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub key: VoxelKey,
    pub expected: OccupancyState,
    pub got: OccupancyState,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompareReport {
    pub voxels_checked: usize,
    pub mismatches: usize,
    /// Mismatch counts by (expected, got).
    pub by_pair: BTreeMap<(OccupancyState, OccupancyState), usize>,
    /// The first mismatches in key order, at most [`MAX_LISTED`].
    pub first: Vec<Mismatch>,
    /// Whether the stored records equal the brute-force boundary of the grid.
    pub records_match: bool,
}

pub const MAX_LISTED: usize = 20;

impl CompareReport {
    pub fn is_match(&self) -> bool {
        self.mismatches == 0
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "voxels checked: {}", self.voxels_checked)?;
        writeln!(out, "mismatches: {}", self.mismatches)?;
        for ((e, g), n) in &self.by_pair {
            writeln!(out, "  expected {e}, got {g}: {n}")?;
        }
        for m in &self.first {
            writeln!(out, "  {} expected {} got {}", m.key, m.expected, m.got)?;
        }
        writeln!(out, "boundary records match audit: {}", if self.records_match { "yes" } else { "no" })
    }
}

/// Materializes the boundary map over the grid's key bounds grown by two
/// voxels and compares state by state.
pub fn compare_maps(grid: &DenseGrid, map: &BoundaryMap) -> Result<CompareReport> {
    let records_match = map.sorted_records() == audit_boundary(grid);
    let Some((lo, hi)) = grid.key_bounds() else {
        return Ok(CompareReport { records_match, mismatches: map.record_count(), ..Default::default() });
    };
    let (lo, hi) = (lo.offset(-2, -2, -2), hi.offset(2, 2, 2));
    let slabs: Vec<Vec<Mismatch>> = (lo.i..=hi.i)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in lo.j..=hi.j {
                for k in lo.k..=hi.k {
                    let key = VoxelKey::new(i, j, k);
                    let expected = grid.state(&key);
                    let got = map.query_state(&key)?;
                    if got != expected {
                        out.push(Mismatch { key, expected, got });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut report = CompareReport {
        voxels_checked: ((hi.i - lo.i + 1) as usize) * ((hi.j - lo.j + 1) as usize) * ((hi.k - lo.k + 1) as usize),
        records_match,
        ..Default::default()
    };
    for m in slabs.into_iter().flatten() {
        report.mismatches += 1;
        *report.by_pair.entry((m.expected, m.got)).or_default() += 1;
        if report.first.len() < MAX_LISTED {
            report.first.push(m);
        }
    }
    Ok(report)
}

/// Runs both mappers over the same scans with the same per-pixel rays and
/// compares the results.
pub fn run_compare(scans: &[Scan], config: MapConfig) -> Result<(CompareReport, BoundaryMapper, DenseGrid)> {
    let mut mapper = BoundaryMapper::new(config)?;
    let mut grid = DenseGrid::new(config.resolution);
    for scan in scans {
        mapper.integrate_scan(scan)?;
        integrate_scan_classical(&mut grid, scan, &config, RayMode::PerPixel);
    }
    let report = compare_maps(&grid, mapper.map())?;
    Ok((report, mapper, grid))
}

/// Test hook: relabels the lowest occupied record as unknown so that a
/// comparison must fail. Returns the key changed, if any.
pub fn corrupt_map(map: &mut BoundaryMap) -> Option<VoxelKey> {
    let victim = map.sorted_records().into_iter().find(|r| r.class == BoundaryClass::ExteriorOccupied)?;
    map.remove_records_in([&victim.key]);
    map.insert_record(BoundaryRecord::new(victim.key, BoundaryClass::ExteriorUnknown, victim.nonfree_mask)).ok()?;
    Some(victim.key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{random_room, simulate_sequence, RoomSpec, ScanPattern};

    fn small_sequence() -> (Vec<Scan>, MapConfig) {
        let spec = RoomSpec { size: crate::types::Vector::new(12.0, 12.0, 4.0), scans: 4, ..Default::default() };
        let (scene, poses) = random_room(&spec, 1);
        let pattern = ScanPattern { n_azimuth: 64, n_elevation: 16, ..Default::default() };
        let scans = simulate_sequence(&scene, &poses, &pattern).unwrap();
        let config = MapConfig { resolution: 0.25, range: 20.0, psi: pattern.angular_spacing(), ..Default::default() };
        (scans, config)
    }

    #[test]
    fn aggregate_median() {
        assert_eq!(Aggregate::of(&[3.0, 1.0, 2.0]), Aggregate { mean: 2.0, median: 2.0 });
        assert_eq!(Aggregate::of(&[4.0, 1.0, 2.0, 3.0]).median, 2.5);
        assert_eq!(Aggregate::of(&[]), Aggregate::default());
    }

    #[test]
    fn compare_small_room() {
        let (scans, config) = small_sequence();
        let (report, _, _) = run_compare(&scans, config).unwrap();
        assert!(report.is_match(), "{report:?}");
        assert!(report.records_match);
        assert!(report.voxels_checked > 0);
    }

    #[test]
    fn corrupted_map_fails_comparison() {
        let (scans, config) = small_sequence();
        let (_, mut mapper, grid) = run_compare(&scans, config).unwrap();
        let key = corrupt_map(mapper.map_mut()).unwrap();
        let report = compare_maps(&grid, mapper.map()).unwrap();
        assert_eq!(report.mismatches, 1);
        assert_eq!(report.first[0], Mismatch { key, expected: OccupancyState::Occupied, got: OccupancyState::Unknown });
        assert!(!report.records_match);
    }

    #[test]
    fn summary_rows_follow_scans() {
        let (scans, config) = small_sequence();
        let (_, summary) = run_sequence(&scans, MapperKind::Boundary, config, RayMode::PerPixel).unwrap();
        assert_eq!(summary.rows.len(), scans.len());
        assert_eq!(summary.traversed_ratios()[0], 1.0);
        let mut csv = Vec::new();
        summary.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(UpdateReport::CSV_HEADER));
        assert!(text.contains("# traversed_ratio_vs_first,1.000000,"));
    }
}
