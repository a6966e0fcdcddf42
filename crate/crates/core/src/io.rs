//! CSV file contracts.
//!
//! | file            | header                  | rows                         |
//! |-----------------|-------------------------|------------------------------|
//! | features.csv    | `id,f0,…,f{D-1}`        | one per object               |
//! | triplets.csv    | `i,j,k`                 | object ids                   |
//! | kernel.csv      | the N ids               | N rows of N distances        |
//! | embedding.csv   | `id,x0,…,x{d-1}`        | one per object               |
//! | labels.csv      | `id,label`              | missing ids are unrevealed   |
//!
//! Lines starting with `#` are comments. Numbers are written with 17
//! significant digits so that a save/load cycle reproduces every `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{
    DistanceKernel, Embedding, FeatureMatrix, IdIndex, LabelVector, TripletSet, UNREVEALED,
};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn parse_finite(path: &Path, line: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(path, line, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value `{cell}`")));
    }
    Ok(v)
}

/// Reads `id,v0,…` rows into ids and a dense matrix.
fn read_id_matrix<R: Read>(path: &Path, input: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = reader(input);
    let width = rdr.headers().map_err(|e| csv_err(path, e))?.len();
    if width == 0 {
        return Err(Error::NoRows { path: path.into() });
    }
    if width < 2 {
        return Err(Error::parse(path, 1, "header needs an id column and at least one value"));
    }
    let mut ids = Vec::new();
    let mut seen = HashMap::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = line_of(&record);
        if record.len() != width {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} columns, found {}", record.len()),
            ));
        }
        let id = record[0].to_string();
        if seen.insert(id.clone(), line).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        for cell in record.iter().skip(1) {
            values.push(parse_finite(path, line, cell)?);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::NoRows { path: path.into() });
    }
    let matrix = Array2::from_shape_vec((ids.len(), width - 1), values)
        .expect("row widths checked above");
    Ok((ids, matrix))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let (ids, values) = read_id_matrix(path, open(path)?)?;
    FeatureMatrix::new(ids, values)
}

pub fn write_features<W: Write>(f: &FeatureMatrix, out: W) -> std::io::Result<()> {
    write_id_matrix(&f.ids, &f.values, "f", out)
}

fn write_id_matrix<W: Write>(
    ids: &[String],
    m: &Array2<f64>,
    prefix: &str,
    out: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((0..m.ncols()).map(|c| format!("{prefix}{c}")));
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(m.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Loads `i,j,k` rows of ids, resolving them against `ids`.
pub fn load_triplets(path: impl AsRef<Path>, ids: &IdIndex) -> Result<TripletSet> {
    let path = path.as_ref();
    read_triplets(path, open(path)?, ids)
}

pub fn read_triplets<R: Read>(path: &Path, input: R, ids: &IdIndex) -> Result<TripletSet> {
    let mut rdr = reader(input);
    rdr.headers().map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 columns, found {}", record.len()),
            ));
        }
        let t = ids
            .resolve(&record[0], &record[1], &record[2])
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(t);
    }
    Ok(TripletSet::new(out))
}

pub fn save_triplets(t: &TripletSet, ids: &IdIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_triplets(t, ids, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn write_triplets<W: Write>(t: &TripletSet, ids: &IdIndex, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "k"])?;
    for &tr in t {
        let (i, j, k) = ids.unresolve(tr);
        w.write_record([i, j, k])?;
    }
    w.flush()
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<Embedding> {
    let path = path.as_ref();
    let (ids, coords) = read_id_matrix(path, open(path)?)?;
    Embedding::new(ids, coords)
}

pub fn save_embedding(y: &Embedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_embedding(y, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn write_embedding<W: Write>(y: &Embedding, out: W) -> std::io::Result<()> {
    write_id_matrix(&y.ids, &y.coords, "x", out)
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<DistanceKernel> {
    let path = path.as_ref();
    read_kernel(path, open(path)?)
}

pub fn read_kernel<R: Read>(path: &Path, input: R) -> Result<DistanceKernel> {
    let mut rdr = reader(input);
    let ids: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let n = ids.len();
    if n == 0 || (n == 1 && ids[0].is_empty()) {
        return Err(Error::NoRows { path: path.into() });
    }
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = line_of(&record);
        if record.len() != n {
            return Err(Error::parse(
                path,
                line,
                format!("expected {n} distances, found {}", record.len()),
            ));
        }
        for cell in record.iter() {
            values.push(parse_finite(path, line, cell)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            path,
            rows + 1,
            format!("expected {n} rows of distances, found {rows}"),
        ));
    }
    let dist = Array2::from_shape_vec((n, n), values).expect("row widths checked above");
    DistanceKernel::new(ids, dist)
}

/// Writes the kernel; each entry of `comments` becomes a leading `# ` line.
pub fn save_kernel(k: &DistanceKernel, comments: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_kernel(k, comments, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn write_kernel<W: Write>(k: &DistanceKernel, comments: &[String], mut out: W) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(k.ids())?;
    for row in k.dist().rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()
}

/// Saves a raw matrix as a kernel after validating it.
///
/// Invalid matrices (asymmetric, negative, nonzero diagonal) are rejected
/// before anything is written.
pub fn save_kernel_matrix(ids: Vec<String>, dist: Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let k = DistanceKernel::new(ids, dist)?;
    save_kernel(&k, &[], path)
}

/// Loads `id,label` rows aligned to `ids`.
///
/// Labels that all parse as integers are used verbatim; otherwise each
/// distinct label string gets a dense id in order of first appearance.
/// Missing ids, empty cells and negative integers are unrevealed.
pub fn load_labels(path: impl AsRef<Path>, ids: &IdIndex) -> Result<LabelVector> {
    let path = path.as_ref();
    read_labels(path, open(path)?, ids)
}

pub fn read_labels<R: Read>(path: &Path, input: R, ids: &IdIndex) -> Result<LabelVector> {
    let mut rdr = reader(input);
    rdr.headers().map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<(usize, usize, String)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 columns, found {}", record.len()),
            ));
        }
        let index = ids
            .index_of(&record[0])
            .ok_or_else(|| Error::parse(path, line, format!("unknown id `{}`", &record[0])))?;
        rows.push((line, index, record[1].to_string()));
    }
    let mut labels = vec![UNREVEALED; ids.len()];
    let all_numeric = rows
        .iter()
        .all(|(_, _, l)| l.is_empty() || l.parse::<i64>().is_ok());
    let mut names: HashMap<String, i64> = HashMap::new();
    for (line, index, raw) in rows {
        if labels[index] != UNREVEALED {
            return Err(Error::parse(path, line, format!("duplicate label for `{}`", ids.id(index))));
        }
        if raw.is_empty() {
            continue;
        }
        labels[index] = if all_numeric {
            raw.parse::<i64>().expect("checked numeric").max(UNREVEALED)
        } else {
            let next = names.len() as i64;
            *names.entry(raw).or_insert(next)
        };
    }
    Ok(LabelVector::new(labels))
}

pub fn write_labels<W: Write>(labels: &LabelVector, ids: &IdIndex, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "label"])?;
    for (index, &l) in labels.labels.iter().enumerate() {
        if l >= 0 {
            w.write_record([ids.id(index), &l.to_string()])?;
        }
    }
    w.flush()
}

/// Reads the leading id column of any of the id-keyed files.
pub fn load_ids(path: impl AsRef<Path>) -> Result<IdIndex> {
    let path = path.as_ref();
    let mut rdr = reader(open(path)?);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    // kernel.csv carries the ids in its header instead of a first column
    if header.get(0) != Some("id") {
        return IdIndex::new(header.iter().map(str::to_string).collect());
    }
    let mut ids = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        ids.push(record[0].to_string());
    }
    IdIndex::new(ids)
}
