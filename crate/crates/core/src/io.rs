//! Tabular ingestion and result emission.
//!
//! Floats are always written with 17 significant digits so that a
//! write/read cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use nalgebra::DMatrix;

use crate::error::{ParsecError, Result};

/// Raw observations: rows are samples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    column_names: Option<Vec<String>>,
}

impl DataMatrix {
    /// Validates the matrix: at least 3 rows, finite entries, no constant column.
    pub fn new(values: DMatrix<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        if let Some(names) = &column_names {
            if names.len() != values.ncols() {
                return Err(ParsecError::Dimension(format!(
                    "{} column names for {} columns",
                    names.len(),
                    values.ncols()
                )));
            }
        }
        if values.nrows() < 3 {
            return Err(ParsecError::TooFewRows { rows: values.nrows() });
        }
        for (column, col) in values.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(ParsecError::NonFinite { row, column });
            }
        }
        let data = Self { values, column_names };
        data.check_variance()?;
        Ok(data)
    }

    fn check_variance(&self) -> Result<()> {
        for (index, col) in self.values.column_iter().enumerate() {
            let first = col[0];
            // Exactly-zero variance only; near-constant columns pass.
            if col.iter().all(|&v| v == first) {
                return Err(ParsecError::ZeroVariance {
                    index,
                    name: self.column_name(index),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn column_name(&self, index: usize) -> String {
        match &self.column_names {
            Some(names) => names[index].clone(),
            None => format!("x{index}"),
        }
    }

    /// Unbiased sample covariance (divisor n - 1).
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut centered = self.values.clone();
        for mut col in centered.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        (centered.transpose() * &centered) / (n as f64 - 1.0)
    }
}

/// Diagnostics from [`load_matrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

/// Reads a delimited numeric table. Rows with an empty or non-numeric cell
/// are dropped (never columns) and counted in the report.
pub fn load_matrix(
    path: impl AsRef<Path>,
    delimiter: u8,
    has_header: bool,
) -> Result<(DataMatrix, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ParsecError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |message: String| ParsecError::Parse {
        path: path.to_path_buf(),
        message,
    };

    let names = if has_header {
        let header = reader.headers().map_err(|e| parse_err(e.to_string()))?;
        Some(header.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut width = names.as_ref().map(Vec::len);
    let mut flat = Vec::new();
    let mut rows_read = 0;
    let mut rows_dropped = 0;
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        match width {
            Some(w) if w != record.len() => {
                return Err(parse_err(format!(
                    "row {} has {} fields, expected {w}",
                    rows_read + 1,
                    record.len()
                )))
            }
            None => width = Some(record.len()),
            _ => {}
        }
        rows_read += 1;
        let parsed: Option<Vec<f64>> = record
            .iter()
            .map(|cell| cell.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(row) => flat.extend(row),
            None => rows_dropped += 1,
        }
    }

    if rows_dropped > 0 {
        info!("{}: dropped {rows_dropped} of {rows_read} rows with missing or non-numeric cells", path.display());
    }
    let p = width.unwrap_or(0);
    let n = rows_read - rows_dropped;
    if n < 3 {
        return Err(ParsecError::TooFewRows { rows: n });
    }
    let values = DMatrix::from_row_slice(n, p, &flat);
    let data = DataMatrix::new(values, names)?;
    Ok((
        data,
        LoadReport {
            rows_read,
            rows_dropped,
        },
    ))
}

/// Writes a data matrix as CSV with a header row.
pub fn write_matrix(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let names: Vec<String> = (0..data.p()).map(|j| data.column_name(j)).collect();
    write_dense(data.values(), &names, path)
}

/// Writes any dense matrix as CSV under the given header.
pub fn write_dense(values: &DMatrix<f64>, header: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let werr = |source| ParsecError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(werr)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", header.join(",")).map_err(werr)?;
    let mut line = String::new();
    for row in values.row_iter() {
        line.clear();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}").map_err(werr)?;
    }
    out.flush().map_err(werr)
}

/// 17 significant digits, which round-trips any finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One screened discovery between features `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub statistic: f64,
    pub p_value: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, statistic: f64, p_value: f64) -> Self {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        Self {
            i,
            j,
            statistic,
            p_value,
        }
    }
}

/// Screened discoveries, kept in the canonical output order
/// (ascending p-value, then index pair).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeSet {
    edges: Vec<Edge>,
}

impl EdgeSet {
    pub fn new(mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.i >= e.j {
                return Err(ParsecError::InvalidArgument(format!(
                    "edge ({}, {}) is not ordered i < j",
                    e.i, e.j
                )));
            }
            if !(0.0..=1.0).contains(&e.p_value) {
                return Err(ParsecError::InvalidArgument(format!(
                    "edge ({}, {}) has p-value {} outside [0, 1]",
                    e.i, e.j, e.p_value
                )));
            }
        }
        edges.sort_by(|a, b| {
            a.p_value
                .total_cmp(&b.p_value)
                .then(a.i.cmp(&b.i))
                .then(a.j.cmp(&b.j))
        });
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|e| (e.i, e.j))
    }
}

pub const EDGE_HEADER: &str = "i,j,statistic,p_value";

pub fn write_edges(edges: &EdgeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let werr = |source| ParsecError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(werr)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{EDGE_HEADER}").map_err(werr)?;
    for e in edges.edges() {
        writeln!(
            out,
            "{},{},{},{}",
            e.i,
            e.j,
            fmt_f64(e.statistic),
            fmt_f64(e.p_value)
        )
        .map_err(werr)?;
    }
    out.flush().map_err(werr)
}

pub fn read_edges(path: impl AsRef<Path>) -> Result<EdgeSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ParsecError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |message: String| ParsecError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| parse_err(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != EDGE_HEADER {
        return Err(parse_err(format!("expected header `{EDGE_HEADER}`")));
    }
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let idx = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad index `{}`: {e}", field(k))))
        };
        let num = |k: usize| {
            field(k)
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad number `{}`: {e}", field(k))))
        };
        edges.push(Edge {
            i: idx(0)?,
            j: idx(1)?,
            statistic: num(2)?,
            p_value: num(3)?,
        });
    }
    EdgeSet::new(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_clean_csv_with_header() {
        let f = write_tmp("a,b,c\n1,2,3\n4,5,7\n2,8,9\n0,1,1\n");
        let (data, report) = load_matrix(f.path(), b',', true).unwrap();
        assert_eq!((data.n(), data.p()), (4, 3));
        assert_eq!(data.column_names().unwrap(), ["a", "b", "c"]);
        assert_eq!(data.values()[(1, 2)], 7.0);
        assert_eq!(report.rows_dropped, 0);
    }

    #[test]
    fn drops_rows_with_missing_cells() {
        let f = write_tmp("a,b,c\n1,2,3\n4,,7\n2,8,9\n0,1,1\n5,5,2\n");
        let (data, report) = load_matrix(f.path(), b',', true).unwrap();
        assert_eq!(data.n(), 4);
        assert_eq!(report.rows_dropped, 1);
        assert_eq!(data.values()[(1, 0)], 2.0);
    }

    #[test]
    fn non_numeric_cells_drop_the_row() {
        let f = write_tmp("1;2\n3;NA\n4;1\n5;9\n");
        let (data, report) = load_matrix(f.path(), b';', false).unwrap();
        assert_eq!((data.n(), report.rows_dropped), (3, 1));
        assert!(data.column_names().is_none());
    }

    #[test]
    fn constant_column_is_rejected_by_index() {
        let f = write_tmp("a,b\n1,5\n2,5\n3,5\n");
        match load_matrix(f.path(), b',', true) {
            Err(ParsecError::ZeroVariance { index, name }) => {
                assert_eq!(index, 1);
                assert_eq!(name, "b");
            }
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn too_few_complete_rows() {
        let f = write_tmp("a,b\n1,2\n,3\n4,5\n");
        assert!(matches!(
            load_matrix(f.path(), b',', true),
            Err(ParsecError::TooFewRows { rows: 2 })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_matrix("/nonexistent/data.csv", b',', true),
            Err(ParsecError::Read { .. })
        ));
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let values = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) as f64).sin() / 3.0 + 1e-300 * j as f64);
        let data = DataMatrix::new(values, None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_matrix(&data, f.path()).unwrap();
        let (back, _) = load_matrix(f.path(), b',', true).unwrap();
        assert_eq!(back.values(), data.values());
    }

    #[test]
    fn empty_edge_set_writes_header_only() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_edges(&EdgeSet::default(), f.path()).unwrap();
        assert_eq!(std::fs::read_to_string(f.path()).unwrap(), "i,j,statistic,p_value\n");
        assert!(read_edges(f.path()).unwrap().is_empty());
    }

    #[test]
    fn single_edge_round_trip() {
        let set = EdgeSet::new(vec![Edge::new(1, 2, 0.9, 1e-4)]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_edges(&set, f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_edges(f.path()).unwrap(), set);
    }

    #[test]
    fn unordered_pair_or_bad_pvalue_rejected() {
        let bad = Edge {
            i: 3,
            j: 1,
            statistic: 0.1,
            p_value: 0.5,
        };
        assert!(EdgeSet::new(vec![bad]).is_err());
        assert!(EdgeSet::new(vec![Edge::new(0, 1, 0.1, 1.5)]).is_err());
    }

    #[test]
    fn unwritable_path() {
        assert!(matches!(
            write_edges(&EdgeSet::default(), "/nonexistent/dir/edges.csv"),
            Err(ParsecError::Write { .. })
        ));
    }
}
