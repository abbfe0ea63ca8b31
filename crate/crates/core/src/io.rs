//! File formats: CSV matrices, the lattice description `graph.json`, and
//! JSON-lines regularization paths (gzip when the name ends in `.gz`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, Connectivity, VoxelGraph};
use crate::projection::Support;
use crate::solver::{PathDiagnostics, PathPoint, RegularizationPath};

/// Writes `path` through a sibling temp file and a rename, so readers never
/// see a half-written file.
pub fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        if is_gzip(path) {
            let mut gz = GzEncoder::new(&mut w, Compression::default());
            contents(&mut gz)?;
            gz.finish().map_err(|e| Error::io(&tmp, e))?;
        } else {
            contents(&mut w)?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(if is_gzip(path) {
        Box::new(BufReader::new(GzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    })
}

pub fn load_matrix_csv(path: &Path, has_header: bool) -> Result<Array2<f64>> {
    let reader = open_reader(path)?;
    parse_matrix_csv(reader, has_header, path)
}

pub fn parse_matrix_csv(reader: impl Read, has_header: bool, origin: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        column,
        message,
    };
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    line,
                    record.len().min(w) + 1,
                    format!("ragged row: expected {w} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("not a number: {field:?}")))?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| parse_err(0, 0, e.to_string()))
}

/// One row per line, shortest round-trip float text.
pub fn save_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_atomic(path, |w| {
        let mut line = String::new();
        for row in m.rows() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_float(*v));
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

fn format_float(v: f64) -> String {
    // Display is the shortest representation that parses back exactly
    format!("{v}")
}

/// A vector stored as an `N x 1` column.
pub fn save_vector_csv(path: &Path, v: ArrayView1<f64>) -> Result<()> {
    save_matrix_csv(path, &v.to_owned().insert_axis(ndarray::Axis(1)))
}

/// Reads a single column or a single row as a vector.
pub fn load_vector_csv(path: &Path, has_header: bool) -> Result<Array1<f64>> {
    let m = load_matrix_csv(path, has_header)?;
    match m.dim() {
        (_, 1) | (1, _) => Ok(Array1::from_iter(m.iter().copied())),
        (r, c) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: format!("expected a single row or column, found {r}x{c}"),
        }),
    }
}

/// Lattice description written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub dims: Vec<usize>,
    /// Active cells in raster order; absent means all cells.
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl GraphSpec {
    pub fn build(&self) -> Result<VoxelGraph> {
        build_lattice(&self.dims, self.mask.as_deref(), self.connectivity)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let reader = open_reader(path)?;
    serde_json::from_reader(reader).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}

/// One line of `path.jsonl`. Vectors are sparse `index -> value` maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub t: usize,
    pub loss: f64,
    pub aug_loss: f64,
    pub support_size: usize,
    pub dist_pre_les: f64,
    pub beta0: f64,
    pub p: usize,
    pub beta_pre: BTreeMap<usize, f64>,
    pub beta_les: BTreeMap<usize, f64>,
    pub support_v: Vec<usize>,
    pub support_g: Vec<usize>,
}

fn sparse(v: ArrayView1<f64>) -> BTreeMap<usize, f64> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, &x)| (i, x))
        .collect()
}

fn dense(map: &BTreeMap<usize, f64>, p: usize) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(p);
    for (&i, &x) in map {
        *out.get_mut(i).ok_or(Error::NodeOutOfRange { index: i, count: p })? = x;
    }
    Ok(out)
}

impl From<&PathPoint> for PathRecord {
    fn from(pt: &PathPoint) -> Self {
        Self {
            t: pt.t,
            loss: pt.diagnostics.loss,
            aug_loss: pt.diagnostics.aug_loss,
            support_size: pt.diagnostics.support_size,
            dist_pre_les: pt.diagnostics.dist_pre_les,
            beta0: pt.beta0,
            p: pt.beta_pre.len(),
            beta_pre: sparse(pt.beta_pre.view()),
            beta_les: sparse(pt.beta_les.view()),
            support_v: pt.support.s_v.clone(),
            support_g: pt.support.s_g.clone(),
        }
    }
}

impl PathRecord {
    pub fn to_point(&self) -> Result<PathPoint> {
        Ok(PathPoint {
            t: self.t,
            beta0: self.beta0,
            beta_pre: dense(&self.beta_pre, self.p)?,
            beta_les: dense(&self.beta_les, self.p)?,
            support: Support {
                s_v: self.support_v.clone(),
                s_g: self.support_g.clone(),
            },
            diagnostics: PathDiagnostics {
                loss: self.loss,
                aug_loss: self.aug_loss,
                dist_pre_les: self.dist_pre_les,
                support_size: self.support_size,
            },
        })
    }
}

pub fn write_path_jsonl(w: &mut dyn Write, path: &RegularizationPath, origin: &Path) -> Result<()> {
    for pt in &path.points {
        serde_json::to_writer(&mut *w, &PathRecord::from(pt)).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(origin, e))?;
    }
    Ok(())
}

pub fn export_path_jsonl(path: &RegularizationPath, file: &Path) -> Result<()> {
    write_atomic(file, |w| write_path_jsonl(w, path, file))
}

pub fn read_path_jsonl(file: &Path) -> Result<Vec<PathRecord>> {
    let reader = open_reader(file)?;
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PathRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: file.to_path_buf(),
            line: k + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
