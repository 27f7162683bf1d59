//! Artifact formats: CSV tables and 8-bit binary PGM rasters with a scale sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::diagnostics::EvalGrid;
use crate::error::{Error, Result};

/// Full-precision scientific notation; parses back to the same `f64`.
pub fn full(x: f64) -> String {
    format!("{x:e}")
}

/// Two-decimal scientific notation for display tables.
pub fn two(x: f64) -> String {
    format!("{x:.2e}")
}

/// A CSV table held as strings.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        w.write_record(&self.header).map_err(|e| Error::format(path, e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let header = r
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` parsed as floats; empty cells are rejected.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::Domain(format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|_| Error::Domain(format!("`{}` in column `{name}` is not a number", r[c])))
            })
            .collect()
    }
}

pub const FIELD_COLUMNS: [&str; 5] = ["i", "j", "x", "y", "value"];

/// Masked nodes of `grid` with one value each, long format.
pub fn write_field_csv(path: &Path, grid: &EvalGrid, values: &[f64]) -> Result<()> {
    let mut t = Table::new(&FIELD_COLUMNS);
    let n = grid.resolution;
    for ((&flat, p), v) in grid.inside.iter().zip(&grid.points).zip(values) {
        t.push(vec![
            (flat / n).to_string(),
            (flat % n).to_string(),
            full(p[0]),
            full(p[1]),
            full(*v),
        ]);
    }
    t.write(path)
}

/// A decoded PGM raster with the value range from its sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub min: f64,
    pub max: f64,
}

/// Sidecar path of a PGM: `name.pgm` → `name.pgm.txt`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes masked `values` as a binary PGM, linearly scaled from their min/max
/// to 0..=255. The first image row is `y = +1`; pixels off the disk are 0.
pub fn write_pgm(path: &Path, grid: &EvalGrid, values: &[f64]) -> Result<()> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (min, max) = if values.is_empty() { (0.0, 0.0) } else { (min, max) };
    let n = grid.resolution;
    let mut raster = vec![0u8; n * n];
    for (&flat, &v) in grid.inside.iter().zip(values) {
        let level = if max > min { ((v - min) / (max - min) * 255.0).round() } else { 0.0 };
        let (i, j) = (flat / n, flat % n);
        raster[(n - 1 - i) * n + j] = level as u8;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(f, "P5\n{n} {n}\n255\n").map_err(|e| Error::io(path, e))?;
    f.write_all(&raster).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    std::fs::write(&side, format!("min {}\nmax {}\n", full(min), full(max))).map_err(|e| Error::io(&side, e))
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::format(path, format!("expected P5 with max 255, got {fields:?}")));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::format(path, format!("bad size `{s}`")));
    let (width, height) = (dim(&fields[1])?, dim(&fields[2])?);
    let pixels = bytes.get(pos..).unwrap_or_default().to_vec();
    if pixels.len() != width * height {
        return Err(Error::format(
            path,
            format!("{} pixel bytes for a {width}×{height} image", pixels.len()),
        ));
    }
    let side = sidecar(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let mut range = [None, None];
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let slot = match it.next() {
            Some("min") => 0,
            Some("max") => 1,
            _ => continue,
        };
        range[slot] = it.next().and_then(|v| v.parse::<f64>().ok());
    }
    match range {
        [Some(min), Some(max)] => Ok(Pgm {
            width,
            height,
            pixels,
            min,
            max,
        }),
        _ => Err(Error::format(&side, "missing min/max")),
    }
}
