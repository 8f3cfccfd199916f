//! Artifact files: a binary grid format for space-time fields and CSV tables for ladders.
//!
//! Grid files are `MAGIC`, a little-endian `u64` header length, a JSON [`GridHeader`], and the
//! field values as little-endian `f64` in slice-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::model::SpaceTimeGrid;

pub const MAGIC: &[u8; 8] = b"DLGRID01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub label: String,
    pub grid: SpaceTimeGrid,
    /// First stored time slice.
    pub first: usize,
    pub values: usize,
}

pub fn write_grid(path: &Path, label: &str, field: &SpaceTimeField) -> Result<()> {
    let header = GridHeader {
        label: label.to_owned(),
        grid: field.grid,
        first: field.first,
        values: field.data.len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for v in &field.data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<(GridHeader, SpaceTimeField)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!("{} is not a grid file", path.display())));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: GridHeader = serde_json::from_slice(&json)?;
    let mut field = SpaceTimeField::zeros(header.grid, header.first);
    if field.data.len() != header.values {
        return Err(Error::Config(format!(
            "grid header announces {} values, grid holds {}",
            header.values,
            field.data.len()
        )));
    }
    let mut buf = [0u8; 8];
    for v in field.data.iter_mut() {
        input.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok((header, field))
}

/// A named numeric table, written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(&self.columns).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(name: impl Into<String>, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
        let columns = r.headers().map_err(csv_error)?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_error)?;
            let row = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number '{s}': {e}")))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Ok(Self {
            name: name.into(),
            columns,
            rows,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpaceGrid;

    #[test]
    fn grid_round_trip() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(2, -1.0, 1.0, 5).unwrap(), 1.0, 4).unwrap();
        let f = SpaceTimeField::from_fn(g, 1, |t, x| t + x[0] * x[1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.dlgrid");
        write_grid(&path, "f", &f).unwrap();
        let (header, back) = read_grid(&path).unwrap();
        assert_eq!(header.label, "f");
        assert_eq!(back, f);
        std::fs::write(&path, b"nonsense").unwrap();
        assert!(read_grid(&path).is_err());
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new("ladder", &["mesh", "qv"]);
        t.push(vec![0.5, 1.0 / 3.0]);
        t.push(vec![0.25, f64::INFINITY]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        t.write_csv(&path).unwrap();
        assert_eq!(Table::read_csv("ladder", &path).unwrap(), t);
    }
}
