//! Plain-text scan logs.
//!
//! ```text
//! FRAME 0 1.5 2.5 1.2
//! 4.5 2.5 1.2
//! 1.5 7.0 0.3
//! FRAME 0.1 1.5 2.5 1.2
//! 4.5 2.6 1.2
//! ```
//!
//! A frame header carries the timestamp and sensor origin; every following
//! line up to the next header is one return, in meters. Blank lines and lines
//! starting with `#` are ignored. Values are written in Rust's shortest
//! round-trip float format, so a log read back is bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Point, Scan};

pub fn write_scans<W: Write>(mut out: W, scans: &[Scan]) -> std::io::Result<()> {
    for scan in scans {
        let o = scan.origin;
        writeln!(out, "FRAME {} {} {} {}", scan.timestamp, o.x, o.y, o.z)?;
        for p in &scan.points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

pub fn save_scan_log(path: &Path, scans: &[Scan]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_scans(&mut out, scans).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn parse_floats<const N: usize>(fields: &[&str], path: &Path, line: usize) -> Result<[f64; N]> {
    if fields.len() != N {
        return Err(Error::parse(path, line, format!("expected {N} values, found {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (slot, field) in out.iter_mut().zip(fields) {
        *slot = field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(path, line, format!("bad number `{field}`")))?;
    }
    Ok(out)
}

/// Parses a scan log; `path` is only used to label errors.
pub fn read_scans<R: BufRead>(input: R, path: &Path) -> Result<Vec<Scan>> {
    let mut scans: Vec<Scan> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "FRAME" {
            let [t, x, y, z] = parse_floats::<4>(&fields[1..], path, line_no)?;
            scans.push(Scan::new(Point::new(x, y, z), Vec::new(), t));
        } else {
            let [x, y, z] = parse_floats::<3>(&fields, path, line_no)?;
            let Some(scan) = scans.last_mut() else {
                return Err(Error::parse(path, line_no, "point before the first FRAME header"));
            };
            scan.points.push(Point::new(x, y, z));
        }
    }
    Ok(scans)
}

pub fn load_scan_log(path: &Path) -> Result<Vec<Scan>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scans = read_scans(BufReader::new(file), path)?;
    if scans.is_empty() {
        return Err(Error::EmptyInput { path: path.into(), message: "no frames".into() });
    }
    Ok(scans)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_FRAMES: &str =
        "FRAME 0 1.5 2.5 1.2\n4.5 2.5 1.2\n1.5 7.0 0.3\n\n# second sweep\nFRAME 0.1 1.5 2.5 1.2\n4.5 2.6 1.2\n";

    #[test]
    fn reads_two_frame_example() {
        let scans = read_scans(TWO_FRAMES.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(scans.len(), 2);
        assert_eq!(scans[0].origin, Point::new(1.5, 2.5, 1.2));
        assert_eq!(scans[0].points.len(), 2);
        assert_eq!(scans[1].timestamp, 0.1);
        assert_eq!(scans[1].points, vec![Point::new(4.5, 2.6, 1.2)]);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let scans = vec![Scan::new(
            Point::new(0.1 + 0.2, -1.0 / 3.0, 1e-17),
            vec![Point::new(std::f64::consts::PI, 2.0f64.sqrt(), -0.0)],
            12.345678901234567,
        )];
        let mut buf = Vec::new();
        write_scans(&mut buf, &scans).unwrap();
        let back = read_scans(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, scans);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = read_scans("FRAME 0 0 0 0\n1 2\n".as_bytes(), Path::new("log.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_scans("1 2 3\n".as_bytes(), Path::new("log.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_scans("FRAME 0 0 x 0\n".as_bytes(), Path::new("log.txt")).unwrap_err();
        assert!(err.to_string().contains("log.txt:1"));
    }
}
