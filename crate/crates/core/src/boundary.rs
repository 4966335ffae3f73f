//! The persistent map: boundary voxels stored in columns along the
//! projection axis.
//!
//! Only voxels straddling the surface that encloses free space are kept.
//! A free voxel with a non-free face neighbor is `Interior`; an unknown voxel
//! next to free space is `ExteriorUnknown`; every occupied voxel is
//! `ExteriorOccupied`. Each record also keeps a 6-bit mask of its non-free
//! neighbors.
//!
//! Occupancy of voxels that have no record is recovered from the column
//! alone. Along a column, every maximal run of free voxels begins with an
//! interior record whose lower-neighbor bit is set and ends with one whose
//! upper-neighbor bit is set (a one-voxel run has both). A voxel without a
//! record is free iff it lies between such a pair, otherwise unknown.
//! Occupied voxels always have a record.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::types::{OccupancyState, ProjectionAxis, VoxelKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryClass {
    Interior,
    ExteriorUnknown,
    ExteriorOccupied,
}

impl BoundaryClass {
    pub fn state(self) -> OccupancyState {
        match self {
            BoundaryClass::Interior => OccupancyState::Free,
            BoundaryClass::ExteriorUnknown => OccupancyState::Unknown,
            BoundaryClass::ExteriorOccupied => OccupancyState::Occupied,
        }
    }

    pub fn is_exterior(self) -> bool {
        self != BoundaryClass::Interior
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryClass::Interior => "int",
            BoundaryClass::ExteriorUnknown => "ukn",
            BoundaryClass::ExteriorOccupied => "occ",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "int" => Some(BoundaryClass::Interior),
            "ukn" => Some(BoundaryClass::ExteriorUnknown),
            "occ" => Some(BoundaryClass::ExteriorOccupied),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryRecord {
    pub key: VoxelKey,
    pub class: BoundaryClass,
    /// Bit `n` set iff neighbor `n` of [`six_neighbors`](crate::types::six_neighbors) is non-free.
    pub nonfree_mask: u8,
}

impl BoundaryRecord {
    pub fn new(key: VoxelKey, class: BoundaryClass, nonfree_mask: u8) -> Self {
        Self { key, class, nonfree_mask }
    }
}

pub const ALL_NEIGHBORS: u8 = 0b11_1111;

/// Boundary class and non-free neighbor mask of a voxel, or `None` when the
/// voxel is not on the boundary. `neighbors` follows `six_neighbors` order.
pub fn compute_boundary_status(state: OccupancyState, neighbors: &[OccupancyState; 6]) -> Option<(BoundaryClass, u8)> {
    let mut nonfree = 0u8;
    for (n, s) in neighbors.iter().enumerate() {
        if !s.is_free() {
            nonfree |= 1 << n;
        }
    }
    match state {
        OccupancyState::Occupied => Some((BoundaryClass::ExteriorOccupied, nonfree)),
        OccupancyState::Free if nonfree != 0 => Some((BoundaryClass::Interior, nonfree)),
        OccupancyState::Unknown if nonfree != ALL_NEIGHBORS => Some((BoundaryClass::ExteriorUnknown, nonfree)),
        _ => None,
    }
}

/// Records sharing one column, sorted by height, unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColumnCell {
    pub column: (i32, i32),
    pub records: Vec<BoundaryRecord>,
}

/// Bytes charged per record: 3 × 4-byte key plus one byte packing the class
/// (2 bits) and neighbor mask (6 bits).
pub const BYTES_PER_RECORD: usize = 13;
/// Bytes charged per column: the 2 × 4-byte column key plus a 24-byte
/// growable array header.
pub const BYTES_PER_COLUMN: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemoryStats {
    pub column_count: usize,
    pub record_count: usize,
    pub interior: usize,
    pub exterior_unknown: usize,
    pub exterior_occupied: usize,
    pub estimated_bytes: usize,
}

#[derive(Clone, Debug)]
pub struct BoundaryMap {
    resolution: f64,
    axis: ProjectionAxis,
    columns: FxHashMap<(i32, i32), ColumnCell>,
    record_count: usize,
}

impl BoundaryMap {
    pub fn new(resolution: f64, axis: ProjectionAxis) -> Self {
        Self { resolution, axis, columns: FxHashMap::default(), record_count: 0 }
    }

    pub fn from_records(
        resolution: f64,
        axis: ProjectionAxis,
        records: impl IntoIterator<Item = BoundaryRecord>,
    ) -> Result<Self> {
        let mut map = Self::new(resolution, axis);
        for r in records {
            map.insert_record(r)?;
        }
        Ok(map)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn axis(&self) -> ProjectionAxis {
        self.axis
    }

    pub fn record_count(&self) -> usize {
        self.record_count
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_count == 0
    }

    pub fn column(&self, column: (i32, i32)) -> Option<&ColumnCell> {
        self.columns.get(&column)
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnCell> {
        self.columns.values()
    }

    pub fn records(&self) -> impl Iterator<Item = &BoundaryRecord> {
        self.columns.values().flat_map(|c| c.records.iter())
    }

    /// All records ordered by key.
    pub fn sorted_records(&self) -> Vec<BoundaryRecord> {
        let mut out: Vec<BoundaryRecord> = self.records().copied().collect();
        out.sort_unstable_by_key(|r| r.key);
        out
    }

    fn locate(&self, key: &VoxelKey) -> Option<(&ColumnCell, std::result::Result<usize, usize>)> {
        let cell = self.columns.get(&self.axis.column_of(key))?;
        let h = self.axis.height_of(key);
        let axis = self.axis;
        Some((cell, cell.records.binary_search_by_key(&h, |r| axis.height_of(&r.key))))
    }

    pub fn get(&self, key: &VoxelKey) -> Option<&BoundaryRecord> {
        match self.locate(key)? {
            (cell, Ok(idx)) => Some(&cell.records[idx]),
            _ => None,
        }
    }

    pub fn insert_record(&mut self, record: BoundaryRecord) -> Result<()> {
        let axis = self.axis;
        let column = axis.column_of(&record.key);
        let h = axis.height_of(&record.key);
        let cell = self.columns.entry(column).or_insert_with(|| ColumnCell { column, records: Vec::new() });
        match cell.records.binary_search_by_key(&h, |r| axis.height_of(&r.key)) {
            Ok(_) => Err(Error::DuplicateRecord(record.key)),
            Err(idx) => {
                cell.records.insert(idx, record);
                self.record_count += 1;
                Ok(())
            }
        }
    }

    /// Removes every record whose key is in `keys`; columns left empty are
    /// dropped. Returns the number of records removed.
    pub fn remove_records_in<'a>(&mut self, keys: impl IntoIterator<Item = &'a VoxelKey>) -> usize {
        let axis = self.axis;
        let mut removed = 0;
        for key in keys {
            let column = axis.column_of(key);
            let Some(cell) = self.columns.get_mut(&column) else {
                continue;
            };
            let h = axis.height_of(key);
            if let Ok(idx) = cell.records.binary_search_by_key(&h, |r| axis.height_of(&r.key)) {
                cell.records.remove(idx);
                removed += 1;
                if cell.records.is_empty() {
                    self.columns.remove(&column);
                }
            }
        }
        self.record_count -= removed;
        removed
    }

    fn corrupted(&self, column: (i32, i32), reason: impl Into<String>) -> Error {
        Error::CorruptedColumn { column, reason: reason.into() }
    }

    /// Occupancy of any voxel, answered from the boundary alone.
    pub fn query_state(&self, key: &VoxelKey) -> Result<OccupancyState> {
        let Some((cell, found)) = self.locate(key) else {
            return Ok(OccupancyState::Unknown);
        };
        let idx = match found {
            Ok(idx) => return Ok(cell.records[idx].class.state()),
            Err(idx) => idx,
        };
        let (lo_bit, hi_bit) = self.axis.run_bits();
        let is_marker = |r: &BoundaryRecord| r.class == BoundaryClass::Interior && r.nonfree_mask & (lo_bit | hi_bit) != 0;

        let Some(below) = cell.records[..idx].iter().rev().find(|r| is_marker(r)) else {
            return Ok(OccupancyState::Unknown);
        };
        if below.nonfree_mask & hi_bit != 0 {
            return Ok(OccupancyState::Unknown);
        }
        match cell.records[idx..].iter().find(|r| is_marker(r)) {
            Some(above) if above.nonfree_mask & (lo_bit | hi_bit) == hi_bit => Ok(OccupancyState::Free),
            Some(above) => Err(self.corrupted(cell.column, format!("run opened at {} is reopened at {}", below.key, above.key))),
            None => Err(self.corrupted(cell.column, format!("run opened at {} never closes", below.key))),
        }
    }

    /// States of the voxels at `heights` (ascending, unique) in one column,
    /// answered in a single sweep with the same rules as
    /// [`query_state`](Self::query_state).
    pub fn query_column(&self, column: (i32, i32), heights: &[i32]) -> Result<Vec<OccupancyState>> {
        let Some(cell) = self.columns.get(&column) else {
            return Ok(vec![OccupancyState::Unknown; heights.len()]);
        };
        let axis = self.axis;
        let (lo_bit, hi_bit) = axis.run_bits();
        let records = &cell.records;
        let marker_bits = |r: &BoundaryRecord| {
            if r.class == BoundaryClass::Interior {
                r.nonfree_mask & (lo_bit | hi_bit)
            } else {
                0
            }
        };
        let mut out = Vec::with_capacity(heights.len());
        let mut idx = 0;
        // Marker that opened the current run, and the index of its verified
        // closing marker once looked up.
        let mut open: Option<usize> = None;
        let mut closed_at: Option<usize> = None;
        for &h in heights {
            while idx < records.len() && axis.height_of(&records[idx].key) < h {
                let bits = marker_bits(&records[idx]);
                if bits == lo_bit {
                    open = Some(idx);
                    closed_at = None;
                } else if bits & hi_bit != 0 {
                    open = None;
                }
                idx += 1;
            }
            if idx < records.len() && axis.height_of(&records[idx].key) == h {
                out.push(records[idx].class.state());
                continue;
            }
            let Some(start) = open else {
                out.push(OccupancyState::Unknown);
                continue;
            };
            if closed_at.is_none_or(|c| c < idx) {
                match records[idx..].iter().position(|r| marker_bits(r) != 0) {
                    Some(n) if marker_bits(&records[idx + n]) == hi_bit => closed_at = Some(idx + n),
                    Some(n) => {
                        return Err(self.corrupted(
                            column,
                            format!("run opened at {} is reopened at {}", records[start].key, records[idx + n].key),
                        ))
                    }
                    None => return Err(self.corrupted(column, format!("run opened at {} never closes", records[start].key))),
                }
            }
            out.push(OccupancyState::Free);
        }
        Ok(out)
    }

    /// Replaces the records of one column at `remove` heights (ascending)
    /// with `add` (ascending by height). Returns (removed, added).
    pub fn rewrite_column(&mut self, column: (i32, i32), remove: &[i32], add: &[BoundaryRecord]) -> Result<(usize, usize)> {
        let axis = self.axis;
        let old: &[BoundaryRecord] = self.columns.get(&column).map_or(&[], |c| c.records.as_slice());
        let mut merged = Vec::with_capacity(old.len() + add.len());
        let mut removed = 0;
        let mut rm = remove.iter().peekable();
        let mut ad = add.iter().peekable();
        for &r in old {
            let h = axis.height_of(&r.key);
            while rm.next_if(|&&x| x < h).is_some() {}
            let drop = rm.peek() == Some(&&h);
            while let Some(a) = ad.next_if(|a| axis.height_of(&a.key) < h) {
                merged.push(*a);
            }
            if ad.peek().is_some_and(|a| axis.height_of(&a.key) == h) && !drop {
                return Err(Error::DuplicateRecord(r.key));
            }
            if drop {
                removed += 1;
            } else {
                merged.push(r);
            }
        }
        merged.extend(ad.copied());
        self.record_count = self.record_count - removed + add.len();
        if merged.is_empty() {
            self.columns.remove(&column);
        } else {
            self.columns.insert(column, ColumnCell { column, records: merged });
        }
        Ok((removed, add.len()))
    }

    /// Checks ordering and run-marker alternation of one column.
    pub fn check_column(&self, column: (i32, i32)) -> Result<()> {
        let Some(cell) = self.columns.get(&column) else {
            return Ok(());
        };
        if cell.records.is_empty() {
            return Err(self.corrupted(column, "empty column retained"));
        }
        let axis = self.axis;
        let (lo_bit, hi_bit) = axis.run_bits();
        let mut open = false;
        let mut prev_h = None;
        for r in &cell.records {
            if axis.column_of(&r.key) != column {
                return Err(self.corrupted(column, format!("record {} filed in the wrong column", r.key)));
            }
            let h = axis.height_of(&r.key);
            if prev_h.is_some_and(|p| p >= h) {
                return Err(self.corrupted(column, format!("records out of order at {}", r.key)));
            }
            prev_h = Some(h);
            if r.class != BoundaryClass::Interior {
                continue;
            }
            if r.nonfree_mask & lo_bit != 0 {
                if open {
                    return Err(self.corrupted(column, format!("run reopened at {}", r.key)));
                }
                open = true;
            }
            if r.nonfree_mask & hi_bit != 0 {
                if !open {
                    return Err(self.corrupted(column, format!("run closed at {} without opening", r.key)));
                }
                open = false;
            }
        }
        if open {
            return Err(self.corrupted(column, "run never closes"));
        }
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<()> {
        let total: usize = self.columns.values().map(|c| c.records.len()).sum();
        if total != self.record_count {
            return Err(Error::CorruptedColumn {
                column: (0, 0),
                reason: format!("record count {} disagrees with stored {}", self.record_count, total),
            });
        }
        for column in self.columns.keys() {
            self.check_column(*column)?;
        }
        Ok(())
    }

    pub fn memory_stats(&self) -> MemoryStats {
        let mut stats = MemoryStats { column_count: self.columns.len(), record_count: self.record_count, ..Default::default() };
        for r in self.records() {
            match r.class {
                BoundaryClass::Interior => stats.interior += 1,
                BoundaryClass::ExteriorUnknown => stats.exterior_unknown += 1,
                BoundaryClass::ExteriorOccupied => stats.exterior_occupied += 1,
            }
        }
        stats.estimated_bytes = stats.record_count * BYTES_PER_RECORD + stats.column_count * BYTES_PER_COLUMN;
        stats
    }

    /// Writes `<i> <j> <k> <class> <mask>` lines sorted by key.
    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in self.sorted_records() {
            writeln!(out, "{} {} {} {} {}", r.key.i, r.key.j, r.key.k, r.class, r.nonfree_mask)?;
        }
        Ok(())
    }

    /// Reads the [`export`](Self::export) format; `path` labels errors.
    pub fn import<R: BufRead>(input: R, resolution: f64, axis: ProjectionAxis, path: &Path) -> Result<Self> {
        let mut map = Self::new(resolution, axis);
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::parse(path, n + 1, what.to_string());
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad("expected `<i> <j> <k> <class> <mask>`"));
            }
            let coord = |s: &str| s.parse::<i32>().map_err(|_| bad(&format!("bad index `{s}`")));
            let key = VoxelKey::new(coord(f[0])?, coord(f[1])?, coord(f[2])?);
            let class = BoundaryClass::parse(f[3]).ok_or_else(|| bad(&format!("bad class `{}`", f[3])))?;
            let mask =
                f[4].parse::<u8>().ok().filter(|m| *m <= ALL_NEIGHBORS).ok_or_else(|| bad(&format!("bad mask `{}`", f[4])))?;
            map.insert_record(BoundaryRecord::new(key, class, mask)).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(map)
    }
}
