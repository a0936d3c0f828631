//! Output formats: CSV tables, raw field dumps with JSON sidecars, and the
//! run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use homlab::{FaceField, MacGrid};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Seventeen significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn format_cell(v: &Value) -> String {
    match v {
        Value::Float(x) => format_float(*x),
        Value::Int(i) => i.to_string(),
        Value::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::Text(s) => s.clone(),
    }
}

/// A table built in memory and written in one go.
#[derive(Clone, Debug, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(format_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_csv())
    }
}

/// JSON sidecar of a field dump.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Sidecar {
    pub field: String,
    /// Row-major shape, slowest axis first.
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub time: Option<f64>,
    pub epsilon: Option<f64>,
    /// Axis of a face-velocity component, `None` for cell fields.
    pub component: Option<usize>,
}

/// Writes `<dir>/<name>.bin` (little-endian f64) and `<dir>/<name>.json`.
pub fn dump_field(dir: &Path, name: &str, data: &[f64], sidecar: &Sidecar) -> std::io::Result<PathBuf> {
    let expected: usize = sidecar.shape.iter().product();
    if expected != data.len() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("field '{name}' has {} values for shape {:?}", data.len(), sidecar.shape),
        ));
    }
    let bin = dir.join(format!("{name}.bin"));
    let mut w = BufWriter::new(fs::File::create(&bin)?);
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(bin)
}

pub fn read_field(path: &Path) -> std::io::Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Dumps a cell field and every face component of a velocity field.
pub struct Dumper<'a> {
    pub dir: &'a Path,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub epsilon: Option<f64>,
}

impl Dumper<'_> {
    pub fn cells(&self, name: &str, data: &[f64], time: Option<f64>) -> std::io::Result<()> {
        let sidecar = Sidecar {
            field: name.into(),
            shape: self.shape.clone(),
            spacing: self.spacing.clone(),
            time,
            epsilon: self.epsilon,
            component: None,
        };
        dump_field(self.dir, name, data, &sidecar).map(|_| ())
    }

    pub fn faces(&self, name: &str, u: &FaceField<f64>, time: Option<f64>) -> std::io::Result<()> {
        for (a, c) in u.comps.iter().enumerate() {
            let sidecar = Sidecar {
                field: name.into(),
                shape: self.shape.clone(),
                spacing: self.spacing.clone(),
                time,
                epsilon: self.epsilon,
                component: Some(a),
            };
            dump_field(self.dir, &format!("{name}_{a}"), c, &sidecar)?;
        }
        Ok(())
    }
}

/// Identifies a grid in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRecord {
    pub role: String,
    pub epsilon: Option<f64>,
    pub shape: Vec<usize>,
    pub spacing: f64,
    pub fluid_cells: usize,
    /// SHA-256 of the shape, spacing and fluid mask.
    pub sha256: String,
}

pub fn grid_record(role: &str, epsilon: Option<f64>, mac: &MacGrid) -> GridRecord {
    let lat = mac.lattice();
    let shape = lat.n()[..lat.dim()].to_vec();
    let mut hasher = Sha256::new();
    for n in &shape {
        hasher.update((*n as u64).to_le_bytes());
    }
    hasher.update(mac.h().to_le_bytes());
    hasher.update(mac.fluid().iter().map(|&f| f as u8).collect::<Vec<u8>>());
    GridRecord {
        role: role.into(),
        epsilon,
        shape,
        spacing: mac.h(),
        fluid_cells: mac.fluid_count(),
        sha256: hex(&hasher.finalize()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub program_version: String,
    pub library_version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub hypotheses: String,
    pub warnings: Vec<String>,
    pub grids: Vec<GridRecord>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Machine-readable failure record.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
    pub violations: Vec<String>,
}

impl ErrorRecord {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("error.json"), serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.0), "-2.0000000000000000e0");
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn text_with_commas_is_quoted() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x,y".into(), Value::Int(3)]);
        assert_eq!(t.to_csv(), "a,b\n\"x,y\",3\n");
    }
}
