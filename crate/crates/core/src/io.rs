//! CSV and JSON serialization of rasters, labels, site lists and tables.
//!
//! Raster CSVs have one line per raster row, starting with the row at
//! `y_min`, and no header. Values are written in shortest round-trip form,
//! so a save/load cycle reproduces finite values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::asymptotics::CellProblemTable;
use crate::error::{Result, UotError};
use crate::geometry::{DiscreteMeasure, Domain, GridDensity};
use crate::laguerre::Tessellation;

fn io_err(path: &Path, source: std::io::Error) -> UotError {
    UotError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, message: impl Into<String>) -> UotError {
    UotError::Parse { path: path.display().to_string(), message: message.into() }
}

fn csv_err(path: &Path, e: csv::Error) -> UotError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(path, source),
            _ => unreachable!(),
        }
    } else {
        parse_err(path, e.to_string())
    }
}

fn writer(path: &Path, headers: bool) -> Result<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .has_headers(headers)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn write_rows<T: ToString>(path: &Path, values: &[T], nx: usize) -> Result<()> {
    let mut w = writer(path, false)?;
    for row in values.chunks(nx) {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a headerless numeric CSV as `(nx, ny, row-major values)`.
fn read_rows<T: std::str::FromStr>(path: &Path) -> Result<(usize, usize, Vec<T>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut values = Vec::new();
    let mut nx = 0;
    let mut ny = 0;
    for (j, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if j == 0 {
            nx = record.len();
        } else if record.len() != nx {
            return Err(parse_err(path, format!("row {} has {} columns, expected {nx}", j + 1, record.len())));
        }
        for (i, field) in record.iter().enumerate() {
            let v = field
                .parse()
                .map_err(|_| parse_err(path, format!("row {}, column {}: cannot parse {field:?}", j + 1, i + 1)))?;
            values.push(v);
        }
        ny += 1;
    }
    if ny == 0 || nx == 0 {
        return Err(parse_err(path, "empty raster"));
    }
    Ok((nx, ny, values))
}

/// Writes the raster values as CSV.
pub fn save_raster(path: impl AsRef<Path>, g: &GridDensity) -> Result<()> {
    write_rows(path.as_ref(), g.values(), g.nx())
}

/// Reads a raster CSV; the grid shape comes from the file, the geometry
/// from `domain`.
pub fn load_raster(path: impl AsRef<Path>, domain: Domain) -> Result<GridDensity> {
    let path = path.as_ref();
    let (nx, ny, values) = read_rows::<f64>(path)?;
    GridDensity::new(domain, nx, ny, values).map_err(|e| parse_err(path, e.to_string()))
}

/// Writes the tessellation labels: 1-based site indices, 0 for the residual set.
pub fn save_labels(path: impl AsRef<Path>, t: &Tessellation) -> Result<()> {
    write_rows(path.as_ref(), &t.export_labels(), t.nx())
}

/// Reads a label CSV as `(nx, ny, labels)` in the export convention.
pub fn load_labels(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u32>)> {
    read_rows(path.as_ref())
}

#[derive(Serialize, serde::Deserialize)]
struct SiteRecord {
    x: f64,
    y: f64,
    mass: f64,
}

/// Writes sites as CSV with header `x,y,mass`.
pub fn save_sites(path: impl AsRef<Path>, nu: &DiscreteMeasure) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, true)?;
    for (p, m) in nu.points().iter().zip(nu.masses()) {
        w.serialize(SiteRecord { x: p[0], y: p[1], mass: *m }).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a site CSV with header `x,y,mass`.
pub fn load_sites(path: impl AsRef<Path>, domain: Option<&Domain>) -> Result<DiscreteMeasure> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut points = Vec::new();
    let mut masses = Vec::new();
    for rec in r.deserialize::<SiteRecord>() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        points.push([rec.x, rec.y]);
        masses.push(rec.mass);
    }
    DiscreteMeasure::new(points, masses, domain).map_err(|e| parse_err(path, e.to_string()))
}

/// Writes the cell-problem table as CSV with header `z,B,B_prime`.
pub fn save_cell_table(path: impl AsRef<Path>, table: &CellProblemTable) -> Result<()> {
    save_cell_samples(path, &table.z_samples, &table.b_values, &table.b_prime_values)
}

/// Writes `(z, B(z), B'(z))` rows with header `z,B,B_prime`.
pub fn save_cell_samples(path: impl AsRef<Path>, z: &[f64], b: &[f64], b_prime: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if b.len() != z.len() || b_prime.len() != z.len() {
        return Err(UotError::ShapeMismatch {
            expected: format!("{} values per column", z.len()),
            actual: format!("{} and {}", b.len(), b_prime.len()),
        });
    }
    let mut w = writer(path, false)?;
    w.write_record(["z", "B", "B_prime"]).map_err(|e| csv_err(path, e))?;
    for k in 0..z.len() {
        w.write_record([z[k].to_string(), b[k].to_string(), b_prime[k].to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes any serializable value as pretty JSON.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| parse_err(path, e.to_string()))?;
    out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}
