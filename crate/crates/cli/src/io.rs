//! CSV and JSON artifacts. Every CSV has a one-line header; numbers use the
//! shortest representation that round-trips.

use std::fs::File;
use std::path::Path;

use memwave_core::{CoefficientField, ConnectingKernel, GridSpec, MemoryKernel, ResponseData};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

/// Relative tolerance on the spacing of a grid read back from file.
const GRID_TOLERANCE: f64 = 1e-9;

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Data {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a numeric CSV, checking the header.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let bad = |msg: String| CliError::Data {
        path: path.to_path_buf(),
        msg,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let found: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if found != header {
        return Err(bad(format!("expected header {header:?}, found {found:?}")));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let row = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes `t,r` on `[0, 2T]`.
pub fn write_response(path: &Path, r: &ResponseData) -> Result<()> {
    let g = r.grid();
    write_csv(
        path,
        &["t", "r"],
        r.values()
            .iter()
            .enumerate()
            .map(|(j, &v)| vec![g.node(j), v]),
    )
}

/// Reads `t,r` and recovers the grid from the `t` column.
pub fn read_response(path: &Path) -> Result<ResponseData> {
    let bad = |msg: String| CliError::Data {
        path: path.to_path_buf(),
        msg,
    };
    let rows = read_csv(path, &["t", "r"])?;
    if rows.len() < 3 || rows.len() % 2 == 0 {
        return Err(bad(format!(
            "response needs 2N + 1 samples on [0, 2T], found {}",
            rows.len()
        )));
    }
    let cells = (rows.len() - 1) / 2;
    let horizon = rows[rows.len() - 1][0] / 2.0;
    let grid = GridSpec::new(horizon, cells).map_err(|e| bad(e.to_string()))?;
    for (j, row) in rows.iter().enumerate() {
        if (row[0] - grid.node(j)).abs() > GRID_TOLERANCE * (1.0 + horizon) {
            return Err(bad(format!("t column is not uniform at row {}", j + 1)));
        }
    }
    ResponseData::new(grid, rows.into_iter().map(|row| row[1]).collect())
        .map_err(|e| bad(e.to_string()))
}

pub fn write_potential(path: &Path, q: &CoefficientField) -> Result<()> {
    let g = q.grid();
    write_csv(
        path,
        &["x", "value"],
        q.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![g.node(i), v]),
    )
}

pub fn write_kernel(path: &Path, k: &MemoryKernel) -> Result<()> {
    let g = k.grid();
    write_csv(
        path,
        &["t", "value"],
        k.values()
            .iter()
            .enumerate()
            .map(|(j, &v)| vec![g.node(j), v]),
    )
}

/// Writes `t,s,c` row-major over the square.
pub fn write_connecting_csv(path: &Path, c: &ConnectingKernel) -> Result<()> {
    let g = *c.grid();
    let n = g.n();
    write_csv(
        path,
        &["t", "s", "c"],
        (0..=n).flat_map(|i| (0..=n).map(move |j| vec![g.node(i), g.node(j), c.get(i, j)])),
    )
}

/// Writes `x,q_true,q_hat,abs_err`.
pub fn write_reconstruction(
    path: &Path,
    q: &CoefficientField,
    q_hat: &CoefficientField,
) -> Result<()> {
    let g = *q.grid();
    write_csv(
        path,
        &["x", "q_true", "q_hat", "abs_err"],
        q.values()
            .iter()
            .zip(q_hat.values())
            .enumerate()
            .map(|(i, (&a, &b))| vec![g.node(i), a, b, (b - a).abs()]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub cells: usize,
}

impl From<&GridSpec> for GridJson {
    fn from(g: &GridSpec) -> Self {
        Self {
            horizon: g.horizon(),
            cells: g.n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KernelJson {
    grid: GridJson,
    rows: Vec<Vec<f64>>,
}

pub fn connecting_to_json(c: &ConnectingKernel) -> String {
    let n = c.grid().n();
    let doc = KernelJson {
        grid: c.grid().into(),
        rows: (0..=n).map(|i| c.row(i).to_vec()).collect(),
    };
    serde_json::to_string(&doc).expect("finite kernel serializes")
}

pub fn connecting_from_json(text: &str) -> Result<ConnectingKernel> {
    let bad = |msg: String| CliError::Config(format!("connecting kernel json: {msg}"));
    let doc: KernelJson = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let grid = GridSpec::new(doc.grid.horizon, doc.grid.cells).map_err(|e| bad(e.to_string()))?;
    if doc.rows.len() != grid.n() + 1 {
        return Err(bad(format!("{} rows for N = {}", doc.rows.len(), grid.n())));
    }
    ConnectingKernel::new(grid, doc.rows.concat()).map_err(|e| bad(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}
