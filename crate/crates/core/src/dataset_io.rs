//! Dataset, query, ranking and trace files.
//!
//! Formats (UTF-8, `.` decimal separator, LF line endings):
//!
//! * feature CSV: header `id,f1,...,fd`, one point per row;
//! * query file: one id per line, blank lines ignored;
//! * ranking CSV: `rank,id,score,is_query`, rank starting at 1, scores with
//!   twelve digits after the decimal point;
//! * trace CSV: `iter,objective,delta`, delta left empty on the first row.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `n` feature vectors of dimension `d`, one row per point, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet<T: Scalar> {
    points: DMatrix<T>,
    ids: Vec<String>,
}

impl<T: Scalar> DataSet<T> {
    /// Validates shape, finiteness and id uniqueness.
    pub fn new(points: DMatrix<T>, ids: Vec<String>) -> Result<Self> {
        let (n, d) = points.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidData(format!(
                "dataset must have at least one point and one feature, got {n}x{d}"
            )));
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} points",
                ids.len(),
                n
            )));
        }
        if let Some((idx, _)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // column-major storage
            let (row, col) = (idx % n, idx / n);
            return Err(Error::InvalidData(format!(
                "non-finite feature at point `{}`, column {}",
                ids[row],
                col + 1
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate id `{id}`")));
            }
        }
        Ok(DataSet { points, ids })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Points as rows (`n x d`).
    pub fn points(&self) -> &DMatrix<T> {
        &self.points
    }

    /// Points as columns (`d x n`), the layout the solvers work in.
    pub fn columns(&self) -> DMatrix<T> {
        self.points.transpose()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Binary marker of which points are user-supplied queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryIndicator {
    lambda: Vec<bool>,
}

impl QueryIndicator {
    /// Requires at least one query.
    pub fn new(lambda: Vec<bool>) -> Result<Self> {
        if !lambda.iter().any(|&q| q) {
            return Err(Error::InvalidData("query indicator has no queries".into()));
        }
        Ok(QueryIndicator { lambda })
    }

    /// Marks the given point indices as queries.
    pub fn from_indices(n: usize, queries: &[usize]) -> Result<Self> {
        let mut lambda = vec![false; n];
        for &q in queries {
            if q >= n {
                return Err(Error::IndexOutOfRange { index: q, len: n });
            }
            lambda[q] = true;
        }
        Self::new(lambda)
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn is_query(&self, i: usize) -> bool {
        self.lambda[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.lambda
    }

    /// The indicator as a 0/1 weight.
    pub fn weight<T: Scalar>(&self, i: usize) -> T {
        if self.lambda[i] {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = usize> + '_ {
        self.lambda
            .iter()
            .enumerate()
            .filter_map(|(i, &q)| q.then_some(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<T> {
    pub id: String,
    pub score: T,
    pub is_query: bool,
}

/// Points ordered by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult<T> {
    pub entries: Vec<RankedEntry<T>>,
    /// Whether query points were filtered out.
    pub queries_excluded: bool,
}

impl<T: Scalar> RankedResult<T> {
    /// Checks non-empty, non-increasing finite scores and unique ids.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Empty("ranking"));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (pos, e) in self.entries.iter().enumerate() {
            if !e.score.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite score for `{}`",
                    e.id
                )));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate id `{}`", e.id)));
            }
            if pos > 0 && e.score > self.entries[pos - 1].score {
                return Err(Error::InvalidData(format!(
                    "scores increase at rank {}",
                    pos + 1
                )));
            }
        }
        Ok(())
    }

    /// Re-sorts by score (descending, stable on current order) and optionally
    /// drops the queries.
    pub fn reranked(&self, exclude_queries: bool) -> Self {
        let mut entries: Vec<_> = self
            .entries
            .iter()
            .filter(|e| !(exclude_queries && e.is_query))
            .cloned()
            .collect();
        entries.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
        RankedResult {
            entries,
            queries_excluded: exclude_queries || self.queries_excluded,
        }
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => parse_error(path, line, format!("{kind:?}")),
    }
}

/// Reads the feature CSV and the query id list.
pub fn load_dataset<T: Scalar>(
    path: impl AsRef<Path>,
    query_path: impl AsRef<Path>,
) -> Result<(DataSet<T>, QueryIndicator)> {
    let data = read_features(path.as_ref())?;
    let queries = read_queries(query_path.as_ref(), data.ids())?;
    Ok((data, queries))
}

/// Reads a feature CSV with header `id,f1,...,fd`.
pub fn read_features<T: Scalar>(path: &Path) -> Result<DataSet<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0).map(str::trim) != Some("id") {
        return Err(parse_error(path, 1, "header must start with `id`"));
    }
    let d = header.len() - 1;
    if d == 0 {
        return Err(parse_error(path, 1, "header names no feature columns"));
    }

    let mut ids = Vec::new();
    let mut values: Vec<T> = Vec::new();
    let mut line_of: HashMap<String, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != d + 1 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} columns, found {}", d + 1, record.len()),
            ));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_error(path, line, "empty id"));
        }
        if line_of.insert(id.clone(), line).is_some() {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line,
                id,
            });
        }
        for (col, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_error(
                    path,
                    line,
                    format!("non-numeric value `{cell}` in column {}", col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    format!("non-finite value `{cell}` in column {}", col + 1),
                ));
            }
            values.push(T::lit(v));
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(parse_error(path, 2, "no data rows"));
    }
    let points = DMatrix::from_row_slice(ids.len(), d, &values);
    DataSet::new(points, ids)
}

/// Reads one id per line; every id must name a dataset point.
pub fn read_queries(path: &Path, ids: &[String]) -> Result<QueryIndicator> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let position: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut lambda = vec![false; ids.len()];
    for (lineno, raw) in text.lines().enumerate() {
        let id = raw.trim();
        if id.is_empty() {
            continue;
        }
        match position.get(id) {
            Some(&i) => lambda[i] = true,
            None => {
                return Err(Error::UnknownQueryId {
                    path: path.to_path_buf(),
                    line: lineno as u64 + 1,
                    id: id.to_string(),
                })
            }
        }
    }
    if !lambda.iter().any(|&q| q) {
        return Err(Error::EmptyQuerySet {
            path: path.to_path_buf(),
        });
    }
    QueryIndicator::new(lambda)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut out: BufWriter<File>) -> Result<()> {
    out.flush().map_err(|e| Error::io(path, e))?;
    out.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

/// Fixed twelve-decimal rendering used for ranking scores.
pub fn format_score<T: Scalar>(score: T) -> String {
    format!("{:.12}", score.to_f64_lossy())
}

/// Writes `rank,id,score,is_query`.
pub fn write_ranking<T: Scalar>(result: &RankedResult<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    result.validate()?;
    let out = create(path)?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| csv_error(path, e);
    writer
        .write_record(["rank", "id", "score", "is_query"])
        .map_err(io)?;
    for (pos, e) in result.entries.iter().enumerate() {
        let rank = (pos + 1).to_string();
        let flag = if e.is_query { "1" } else { "0" };
        writer
            .write_record([rank.as_str(), e.id.as_str(), &format_score(e.score), flag])
            .map_err(io)?;
    }
    let out = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    finish(path, out)
}

/// Reads a ranking CSV written by [`write_ranking`], preserving file order.
pub fn read_ranking<T: Scalar>(path: impl AsRef<Path>) -> Result<RankedResult<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["rank", "id", "score", "is_query"] {
        return Err(parse_error(
            path,
            1,
            "header must be `rank,id,score,is_query`",
        ));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(parse_error(
                path,
                line,
                format!("expected 4 columns, found {}", record.len()),
            ));
        }
        let score: f64 = record[2]
            .parse()
            .map_err(|_| parse_error(path, line, format!("non-numeric score `{}`", &record[2])))?;
        let is_query = match &record[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(
                    path,
                    line,
                    format!("is_query must be 0 or 1, found `{other}`"),
                ))
            }
        };
        entries.push(RankedEntry {
            id: record[1].to_string(),
            score: T::lit(score),
            is_query,
        });
    }
    let queries_excluded = !entries.iter().any(|e| e.is_query);
    let result = RankedResult {
        entries,
        queries_excluded,
    };
    result.validate()?;
    Ok(result)
}

/// Writes `iter,objective,delta`. Iterations must increase strictly from 1.
pub fn write_trace<T, I>(trace: I, path: impl AsRef<Path>) -> Result<()>
where
    T: Scalar,
    I: IntoIterator<Item = (usize, T, Option<T>)>,
{
    let path = path.as_ref();
    let rows: Vec<_> = trace.into_iter().collect();
    if rows.is_empty() {
        return Err(Error::Empty("trace"));
    }
    for (pos, (iter, _, _)) in rows.iter().enumerate() {
        let ok = if pos == 0 {
            *iter == 1
        } else {
            *iter > rows[pos - 1].0
        };
        if !ok {
            return Err(Error::InvalidData(format!(
                "trace iterations must increase strictly from 1, found {iter} at row {}",
                pos + 1
            )));
        }
    }
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "iter,objective,delta").map_err(io)?;
    for (iter, objective, delta) in rows {
        match delta {
            Some(delta) if iter > 1 => writeln!(out, "{iter},{objective},{delta}"),
            _ => writeln!(out, "{iter},{objective},"),
        }
        .map_err(io)?;
    }
    finish(path, out)
}

/// Writes a feature CSV in the format [`read_features`] accepts.
pub fn write_features<T: Scalar>(data: &DataSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((1..=data.dim()).map(|j| format!("f{j}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, id) in data.ids().iter().enumerate() {
        write!(out, "{id}").map_err(io)?;
        for v in data.points().row(i).iter() {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    finish(path, out)
}

/// Writes the ids of the marked queries, one per line.
pub fn write_queries<T: Scalar>(
    data: &DataSet<T>,
    queries: &QueryIndicator,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for q in queries.queries() {
        writeln!(out, "{}", data.ids()[q]).map_err(|e| Error::io(path, e))?;
    }
    finish(path, out)
}
