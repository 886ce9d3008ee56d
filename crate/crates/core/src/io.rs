//! File formats: Matrix Market coordinate matrices (1-based), CSV point clouds,
//! and CSV label files with rows `vertex_index,label` (0-based).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Metric, PointCloud};
use crate::sparse::CsrMatrix;

fn parse_err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| parse_err(&path.display().to_string(), e.to_string()))
}

/// Reads a square real (or integer or pattern) coordinate matrix. Symmetric
/// files are expanded to both triangles.
pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    read_matrix_market_from(open(path)?, &path.display().to_string())
}

pub fn read_matrix_market_from<R: BufRead>(reader: R, name: &str) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(parse_err(name, "empty file")),
    };
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(name, "missing '%%MatrixMarket matrix' header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(name, format!("unsupported format '{}'", tokens[2])));
    }
    let pattern = match tokens[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(parse_err(name, format!("unsupported field '{other}'"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(name, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let at = |msg: String| parse_err(name, format!("line {}: {msg}", lineno + 1));
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(at("expected 'rows cols nnz'".into()));
                }
                let nums: Vec<usize> = fields
                    .iter()
                    .map(|f| f.parse().map_err(|_| at(format!("bad integer '{f}'"))))
                    .collect::<Result<_>>()?;
                if nums[0] != nums[1] {
                    return Err(at(format!("matrix is {}x{}, not square", nums[0], nums[1])));
                }
                size = Some((nums[0], nums[2]));
                triplets.reserve(if symmetric { 2 * nums[2] } else { nums[2] });
            }
            Some((n, _)) => {
                let want = if pattern { 2 } else { 3 };
                if fields.len() < want {
                    return Err(at(format!("expected {want} fields")));
                }
                let idx = |f: &str| -> Result<usize> {
                    let i: usize = f.parse().map_err(|_| at(format!("bad index '{f}'")))?;
                    if i == 0 || i > n {
                        return Err(at(format!("index {i} outside 1..={n}")));
                    }
                    Ok(i - 1)
                };
                let (i, j) = (idx(fields[0])?, idx(fields[1])?);
                let v: f64 = if pattern {
                    1.0
                } else {
                    fields[2].parse().map_err(|_| at(format!("bad value '{}'", fields[2])))?
                };
                triplets.push((i, j, v));
                if symmetric && i != j {
                    triplets.push((j, i, v));
                }
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(name, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(name, format!("header promises {nnz} entries, found {stored}")));
    }
    Ok(CsrMatrix::from_triplets(n, triplets))
}

/// Writes a matrix; exactly symmetric matrices are stored as their lower triangle.
pub fn write_matrix_market(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to<W: Write>(w: &mut W, m: &CsrMatrix) -> Result<()> {
    let symmetric = m.is_symmetric();
    let entries: Vec<(usize, usize, f64)> = m.triplets().filter(|&(i, j, _)| !symmetric || i >= j).collect();
    writeln!(
        w,
        "%%MatrixMarket matrix coordinate real {}",
        if symmetric { "symmetric" } else { "general" }
    )?;
    writeln!(w, "{} {} {}", m.dim(), m.dim(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader)
}

/// Points one per row; a first row that does not parse as numbers is a header.
pub fn read_points_csv(path: &Path, metric: Metric) -> Result<PointCloud> {
    read_points_csv_from(open(path)?, &path.display().to_string(), metric)
}

pub fn read_points_csv_from<R: Read>(reader: R, name: &str, metric: Metric) -> Result<PointCloud> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, record) in csv_reader(reader).records().enumerate() {
        let record = record.map_err(|e| parse_err(name, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if lineno == 0 => continue,
            Err(_) => {
                return Err(parse_err(name, format!("row {}: non-numeric field", lineno + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_err(name, "no points"));
    }
    PointCloud::new(&rows, metric).map_err(|e| parse_err(name, e.to_string()))
}

pub fn write_points_csv(path: &Path, points: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_points_csv_to(&mut w, points)?;
    w.flush()?;
    Ok(())
}

pub fn write_points_csv_to<W: Write>(w: &mut W, points: &PointCloud) -> Result<()> {
    let header: Vec<String> = (0..points.dim()).map(|c| format!("x{c}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in points.rows() {
        let fields: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// `(vertex, label)` rows; an optional non-numeric first row is skipped.
pub fn read_label_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    read_label_pairs_from(open(path)?, &path.display().to_string())
}

pub fn read_label_pairs_from<R: Read>(reader: R, name: &str) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (lineno, record) in csv_reader(reader).records().enumerate() {
        let record = record.map_err(|e| parse_err(name, e.to_string()))?;
        if record.len() < 2 {
            return Err(parse_err(name, format!("row {}: expected vertex,label", lineno + 1)));
        }
        match (record[0].parse::<usize>(), record[1].parse::<usize>()) {
            (Ok(v), Ok(l)) => pairs.push((v, l)),
            _ if lineno == 0 => continue,
            _ => return Err(parse_err(name, format!("row {}: expected two nonnegative integers", lineno + 1))),
        }
    }
    Ok(pairs)
}

/// Dense labels for vertices `0..n`; every vertex must appear exactly once.
pub fn labels_from_pairs(pairs: &[(usize, usize)], n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![usize::MAX; n];
    for &(v, l) in pairs {
        if v >= n {
            return Err(Error::input(format!("label row for vertex {v}, but n = {n}")));
        }
        if labels[v] != usize::MAX {
            return Err(Error::input(format!("vertex {v} labeled twice")));
        }
        labels[v] = l;
    }
    if let Some(v) = labels.iter().position(|&l| l == usize::MAX) {
        return Err(Error::input(format!("vertex {v} has no label")));
    }
    Ok(labels)
}

pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    labels_from_pairs(&read_label_pairs(path)?, n)
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_labels_csv_to(&mut w, labels)?;
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv_to<W: Write>(w: &mut W, labels: &[usize]) -> Result<()> {
    writeln!(w, "vertex,label")?;
    for (v, l) in labels.iter().enumerate() {
        writeln!(w, "{v},{l}")?;
    }
    Ok(())
}
