//! Plain-text matrix files.
//!
//! ```text
//! rows cols
//! a11 a12 ...
//! a21 a22 ...
//! ```
//!
//! One row per line, whitespace separated. Vectors are stored as `n 1`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matkernel::{RealMatrix, RealVector};

pub fn parse_matrix(text: &str, origin: &Path) -> Result<RealMatrix> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| perr(1, "empty file, expected header 'rows cols'".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(perr(hline, format!("expected header 'rows cols', found '{header}'")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| perr(hline, format!("invalid dimension '{s}'")))
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (lineno, line) in lines {
        if seen_rows == rows {
            return Err(perr(lineno, format!("unexpected extra row (header declares {rows} rows)")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| perr(lineno, format!("invalid number '{tok}'")))?;
            if !v.is_finite() {
                return Err(perr(lineno, format!("non-finite entry '{tok}'")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != cols {
            return Err(perr(lineno, format!("expected {cols} entries, found {got}")));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        let last = text.lines().count().max(1);
        return Err(perr(last, format!("expected {rows} rows, found {seen_rows}")));
    }
    Ok(RealMatrix::from_row_slice(rows, cols, &data))
}

pub fn format_matrix(m: &RealMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<RealMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix(&text, path)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &RealMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(m)).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<RealVector> {
    let path = path.as_ref();
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected a column vector (cols = 1), found {} columns", m.ncols()),
        });
    }
    Ok(m.column(0).into_owned())
}

pub fn write_vector(path: impl AsRef<Path>, v: &RealVector) -> Result<()> {
    write_matrix(path, &RealMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}
