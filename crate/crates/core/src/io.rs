//! File formats: per-cell observation CSVs, the grid manifest, config files,
//! edge-score tables and adjacency lists.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{pair_count, pairs, Adjacency};
use crate::hyper::UserConfig;
use crate::model::{CellKey, DatasetGrid, ObservationMatrix};
use crate::simgen::SimSpec;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Model(#[from] crate::error::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn parse_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Deserializes TOML or JSON by file extension.
fn from_file<T: serde::de::DeserializeOwned>(path: &Path) -> IoResult<T> {
    let text = fs::read_to_string(path).map_err(|e| parse_err(path, e.to_string()))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "json" => serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string())),
        "toml" => toml::from_str(&text).map_err(|e| parse_err(path, e.to_string())),
        other => Err(parse_err(
            path,
            format!("unsupported config extension '{other}' (expected toml or json)"),
        )),
    }
}

pub fn read_config(path: &Path) -> IoResult<UserConfig> {
    from_file(path)
}

pub fn read_sim_spec(path: &Path) -> IoResult<SimSpec> {
    from_file(path)
}

/// One observation CSV: header row of variable names, one row per sample.
pub fn read_observation_csv(path: &Path) -> IoResult<(Vec<String>, ObservationMatrix)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e.to_string()))?;
    let names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let p = names.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != p {
            return Err(parse_err(
                path,
                format!("row {} has {} fields, expected {p}", n + 2, record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, format!("not a number: '{field}'")))?;
            rows.push(v);
        }
        n += 1;
    }
    let matrix = DMatrix::from_row_slice(n, p, &rows);
    Ok((names, ObservationMatrix::new(matrix)))
}

pub fn write_observation_csv(path: &Path, names: &[String], x: &ObservationMatrix) -> IoResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(names)?;
    for r in 0..x.n() {
        let row: Vec<String> = (0..x.p()).map(|c| x.values()[(r, c)].to_string()).collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Maps grid cells to data files; absent cells are simply not listed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub cells: Vec<ManifestCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub locus: String,
    pub period: i64,
    pub path: String,
}

pub fn read_manifest(path: &Path) -> IoResult<Manifest> {
    from_file(path)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> IoResult<()> {
    let text = toml::to_string(manifest).map_err(|e| parse_err(path, e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Reads a manifest and every listed cell (paths resolve relative to the
/// manifest's directory). All cells must share one header.
pub fn load_grid(manifest_path: &Path) -> IoResult<(Vec<String>, DatasetGrid)> {
    let manifest = read_manifest(manifest_path)?;
    let base: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut names: Option<Vec<String>> = None;
    let mut entries = Vec::new();
    for cell in &manifest.cells {
        let file = base.join(&cell.path);
        let (cell_names, x) = read_observation_csv(&file)?;
        match &names {
            None => names = Some(cell_names),
            Some(expected) if *expected != cell_names => {
                return Err(parse_err(
                    &file,
                    "variable names differ from the other cells".to_string(),
                ));
            }
            _ => {}
        }
        entries.push((
            CellKey {
                locus: cell.locus.clone(),
                period: cell.period,
            },
            x,
        ));
    }
    let grid = DatasetGrid::from_cells(entries)?;
    Ok((names.unwrap_or_default(), grid))
}

/// Upper-triangle edge scores: rows `i,j,score` with 0-based `i < j`.
pub fn write_edge_scores_csv(path: &Path, scores: &DMatrix<f64>) -> IoResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["i", "j", "score"])?;
    for (i, j) in pairs(scores.nrows()) {
        writer.write_record([i.to_string(), j.to_string(), scores[(i, j)].to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_edge_scores_csv(path: &Path) -> IoResult<DMatrix<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e.to_string()))?;
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_index = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(parse_err(path, "expected rows i,j,score"));
        }
        let i: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, "bad i"))?;
        let j: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, "bad j"))?;
        let s: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, "bad score"))?;
        if i >= j {
            return Err(parse_err(path, "need i < j on every row"));
        }
        max_index = max_index.max(j);
        triples.push((i, j, s));
    }
    let p = max_index + 1;
    if triples.len() != pair_count(p) {
        return Err(parse_err(
            path,
            format!(
                "found {} rows; a complete upper triangle for p = {p} has {}",
                triples.len(),
                pair_count(p)
            ),
        ));
    }
    let mut m = DMatrix::zeros(p, p);
    for (i, j, s) in triples {
        m[(i, j)] = s;
        m[(j, i)] = s;
    }
    Ok(m)
}

/// Adjacency list: rows `i,j` with 0-based `i < j`.
pub fn write_adjacency_csv(path: &Path, g: &Adjacency) -> IoResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["i", "j"])?;
    for (i, j) in g.edges() {
        writer.write_record([i.to_string(), j.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_adjacency_csv(path: &Path, p: usize) -> IoResult<Adjacency> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e.to_string()))?;
    let mut g = Adjacency::empty(p);
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(parse_err(path, "expected rows i,j"));
        }
        let i: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, "bad i"))?;
        let j: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, "bad j"))?;
        if i >= p || j >= p || i == j {
            return Err(parse_err(
                path,
                format!("edge ({i},{j}) out of range for p = {p}"),
            ));
        }
        g.set(i, j, true);
    }
    Ok(g)
}

pub fn write_eta_trace_csv(path: &Path, trace: &[(f64, f64)]) -> IoResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["iter", "eta_s", "eta_t"])?;
    for (iter, (s, t)) in trace.iter().enumerate() {
        writer.write_record([iter.to_string(), s.to_string(), t.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
