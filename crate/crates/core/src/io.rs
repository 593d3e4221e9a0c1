//! Plain-text exchange formats.
//!
//! Matrices use a coordinate format: a header line `n nnz` followed by `nnz`
//! lines `i j value` with 1-based indices. Vectors hold one value per line.
//! Blank lines and lines starting with `#` or `%` are ignored. Values are
//! written with 17 significant digits so that they read back exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with('%'))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    let f = field.ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?;
    f.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot read {what} from '{f}'")))
}

pub fn parse_matrix(text: &str) -> Result<SparseMatrix> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let mut fields = header.split_whitespace();
    let n: usize = parse_field(fields.next(), hl, "n")?;
    let nnz: usize = parse_field(fields.next(), hl, "nnz")?;
    let mut triplets = Vec::with_capacity(nnz);
    for (line, l) in lines {
        let mut f = l.split_whitespace();
        let i: usize = parse_field(f.next(), line, "row index")?;
        let j: usize = parse_field(f.next(), line, "column index")?;
        let v: f64 = parse_field(f.next(), line, "value")?;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::Parse(format!("line {line}: index ({i}, {j}) outside 1..={n}")));
        }
        if !v.is_finite() {
            return Err(Error::Parse(format!("line {line}: non-finite value")));
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::Parse(format!("header declares {nnz} entries, found {}", triplets.len())));
    }
    SparseMatrix::from_triplets(n, &triplets)
}

pub fn format_matrix(m: &SparseMatrix) -> String {
    let mut out = String::new();
    let entries: Vec<_> = m.iter().collect();
    writeln!(out, "{} {}", m.n(), entries.len()).unwrap();
    for (i, j, v) in entries {
        writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v).unwrap();
    }
    out
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    content_lines(text)
        .map(|(line, l)| {
            let v: f64 = parse_field(Some(l), line, "value")?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("line {line}: non-finite value")))
            }
        })
        .collect()
}

pub fn format_vector(v: &[f64]) -> String {
    let mut out = String::with_capacity(v.len() * 24);
    for x in v {
        writeln!(out, "{x:.16e}").unwrap();
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    parse_matrix(&read(path.as_ref())?)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_vector(&read(path.as_ref())?)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &SparseMatrix) -> Result<()> {
    Ok(std::fs::write(path, format_matrix(m))?)
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    Ok(std::fs::write(path, format_vector(v))?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_text_reads_back_exactly() {
        let m = SparseMatrix::from_triplets(3, &[(0, 0, 0.1), (2, 0, 0.9), (1, 1, 1.0 / 3.0), (2, 2, -2e-300)]).unwrap();
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(back.to_dense(), m.to_dense());
        let v = vec![std::f64::consts::PI, -1e-17, 0.0];
        assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2 1\n3 1 0.5\n").is_err());
        assert!(parse_matrix("2 2\n1 1 0.5\n").is_err());
        assert!(parse_matrix("2 1\n1 1 abc\n").is_err());
        assert!(parse_vector("1.0\nnan\n").is_err());
        let m = parse_matrix("% comment\n2 2\n\n1 1 1\n2 2 1\n").unwrap();
        assert_eq!(m.nnz(), 2);
    }
}
