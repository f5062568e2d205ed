//! On-disk formats: the `HJRT1` field container and the mask CSV.
//!
//! Field files are self-describing: the magic line `HJRT1`, one ASCII header
//! line `dim {count lo hi periodic}×dim time horizon`, then the raw node
//! values as little-endian f64 in storage order (row-major, last dimension
//! fastest). Header floats use the shortest round-trip decimal form, so a
//! write → read → write cycle is byte-identical.
//!
//! Mask files are CSV: one header row describing the grid, the cut level,
//! and the provenance tag, then one row per member node with its multi-index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Grid, GridError, ValueField};
use crate::sets::{LevelMask, MaskSource};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Format(msg.into()))
}

pub fn write_field(path: &Path, field: &ValueField) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"HJRT1\n")?;
    let grid = field.grid();
    let mut header = format!("{}", grid.dim());
    for d in 0..grid.dim() {
        header.push_str(&format!(
            " {} {} {} {}",
            grid.counts()[d],
            grid.bounds_lo()[d],
            grid.bounds_hi()[d],
            grid.periodic()[d] as u8
        ));
    }
    header.push_str(&format!(" {} {}\n", field.time, field.horizon));
    w.write_all(header.as_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ValueField, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    if magic != "HJRT1\n" {
        return format_err(format!("{}: not an HJRT1 field file", path.display()));
    }
    let mut header = String::new();
    r.read_line(&mut header)?;
    let mut tok = header.split_whitespace();
    let mut next = |what: &str| -> Result<&str, IoError> {
        tok.next()
            .ok_or_else(|| IoError::Format(format!("truncated header: missing {what}")))
    };
    let dim: usize = parse(next("dimension count")?, "dimension count")?;
    let mut counts = Vec::with_capacity(dim);
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    let mut periodic = Vec::with_capacity(dim);
    for d in 0..dim {
        counts.push(parse(next("count")?, &format!("count[{d}]"))?);
        lo.push(parse(next("lo")?, &format!("lo[{d}]"))?);
        hi.push(parse(next("hi")?, &format!("hi[{d}]"))?);
        let p: u8 = parse(next("periodic")?, &format!("periodic[{d}]"))?;
        periodic.push(p != 0);
    }
    let time: f64 = parse(next("time")?, "time")?;
    let horizon: f64 = parse(next("horizon")?, "horizon")?;
    let grid = Arc::new(Grid::new(lo, hi, counts, periodic)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != grid.num_nodes() * 8 {
        return format_err(format!(
            "expected {} value bytes, found {}",
            grid.num_nodes() * 8,
            bytes.len()
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ValueField::new(grid, values, time, horizon)?)
}

fn parse<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T, IoError> {
    tok.parse()
        .map_err(|_| IoError::Format(format!("cannot parse {what} from `{tok}`")))
}

pub fn write_mask(path: &Path, mask: &LevelMask) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = mask.grid();
    let mut header = format!("HJMASK1,{}", grid.dim());
    for &c in grid.counts() {
        header.push_str(&format!(",{c}"));
    }
    for &v in grid.bounds_lo() {
        header.push_str(&format!(",{v}"));
    }
    for &v in grid.bounds_hi() {
        header.push_str(&format!(",{v}"));
    }
    for &p in grid.periodic() {
        header.push_str(&format!(",{}", p as u8));
    }
    header.push_str(&format!(",{},{}\n", mask.level, mask.source));
    w.write_all(header.as_bytes())?;
    let mut idx = vec![0usize; grid.dim()];
    for (flat, &m) in mask.member().iter().enumerate() {
        if m {
            grid.unflatten(flat, &mut idx);
            let row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            w.write_all(row.join(",").as_bytes())?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<LevelMask, IoError> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::Format("empty mask file".into()))??;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.first() != Some(&"HJMASK1") {
        return format_err(format!("{}: not an HJMASK1 file", path.display()));
    }
    let dim: usize = parse(fields.get(1).copied().unwrap_or(""), "dimension count")?;
    let want = 2 + 4 * dim + 2;
    if fields.len() != want {
        return format_err(format!(
            "mask header has {} fields, expected {want}",
            fields.len()
        ));
    }
    let mut at = 2;
    let mut take = |what: &str| -> Result<Vec<f64>, IoError> {
        let out: Result<Vec<f64>, IoError> = fields[at..at + dim]
            .iter()
            .map(|t| parse(t, what))
            .collect();
        at += dim;
        out
    };
    let counts: Vec<usize> = take("count")?.iter().map(|&v| v as usize).collect();
    let lo = take("lo")?;
    let hi = take("hi")?;
    let periodic: Vec<bool> = take("periodic")?.iter().map(|&v| v != 0.0).collect();
    let level: f64 = parse(fields[at], "level")?;
    let source: MaskSource = fields[at + 1]
        .parse()
        .map_err(IoError::Format)?;
    let grid = Arc::new(Grid::new(lo, hi, counts, periodic)?);
    let mut member = vec![false; grid.num_nodes()];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let idx: Result<Vec<usize>, IoError> = line
            .split(',')
            .map(|t| parse(t, &format!("index on data row {}", lineno + 2)))
            .collect();
        let idx = idx?;
        if idx.len() != grid.dim() {
            return format_err(format!(
                "data row {} has {} indices, expected {}",
                lineno + 2,
                idx.len(),
                grid.dim()
            ));
        }
        for (d, &i) in idx.iter().enumerate() {
            if i >= grid.counts()[d] {
                return format_err(format!("index {i} out of range on data row {}", lineno + 2));
            }
        }
        member[grid.flat(&idx)] = true;
    }
    Ok(LevelMask::new(grid, member, level, source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::rasterize_analytic;

    fn demo_field() -> ValueField {
        let grid = Arc::new(
            Grid::new(
                vec![-1.0, 0.0],
                vec![1.5, std::f64::consts::TAU],
                vec![5, 8],
                vec![false, true],
            )
            .unwrap(),
        );
        let values: Vec<f64> = (0..grid.num_nodes()).map(|i| (i as f64).sin() * 3.7).collect();
        ValueField::new(grid, values, 0.0, 1.2).unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.hjrt");
        let p2 = dir.path().join("b.hjrt");
        let field = demo_field();
        write_field(&p1, &field).unwrap();
        let back = read_field(&p1).unwrap();
        assert_eq!(back.values(), field.values());
        assert_eq!(back.time, field.time);
        assert_eq!(back.horizon, field.horizon);
        assert_eq!(**back.grid(), **field.grid());
        write_field(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn field_reader_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.hjrt");
        std::fs::write(&p, b"not a field\n").unwrap();
        assert!(matches!(read_field(&p), Err(IoError::Format(_))));
        std::fs::write(&p, b"HJRT1\n2 5 0 1 0 5 0 1 0 0 1\nshort").unwrap();
        assert!(matches!(read_field(&p), Err(IoError::Format(_))));
    }

    #[test]
    fn mask_round_trip_preserves_membership() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let grid = Arc::new(
            Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![9, 9], vec![false, false]).unwrap(),
        );
        let mask = rasterize_analytic(&grid, |s| s[0] + s[1] <= 0.3);
        write_mask(&p, &mask).unwrap();
        let back = read_mask(&p).unwrap();
        assert_eq!(back.member(), mask.member());
        assert_eq!(back.level, mask.level);
        assert_eq!(back.source, mask.source);
        assert_eq!(**back.grid(), **mask.grid());
    }
}
