//! Plain-text matrix formats.
//!
//! Dense: first line `rows cols`, then one line per row of space-separated
//! decimals. Triplets: header line `rows,cols`, then `i,j,value` lines
//! (0-indexed) for the nonzero entries.

use std::io::{BufRead, Write};

use super::DenseMatrix;
use crate::error::{Error, Result};

pub fn write_dense<W: Write>(x: &DenseMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{} {}", x.rows(), x.cols())?;
    for i in 0..x.rows() {
        let line: Vec<String> = x.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_dense<R: BufRead>(r: R) -> Result<DenseMatrix> {
    let mut lines = r
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (line_no, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let header = header?;
    let dims: Vec<usize> = parse_fields(&header, char::is_whitespace, line_no)?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(line_no, "header must be `rows cols`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(line_no + 1, "fewer rows than declared"))?;
        let values: Vec<f64> = parse_fields(&line?, char::is_whitespace, line_no)?;
        if values.len() != cols {
            return Err(parse_err(line_no, &format!("expected {cols} values, found {}", values.len())));
        }
        data.extend(values);
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(parse_err(line_no, "more rows than declared"));
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn write_triplets<W: Write>(x: &DenseMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{},{}", x.rows(), x.cols())?;
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            if v != 0.0 {
                writeln!(w, "{i},{j},{v:e}")?;
            }
        }
    }
    Ok(())
}

/// Reads triplets. The `rows,cols` header may be omitted when `dims` is
/// given; with neither, the shape is inferred from the largest indices.
pub fn read_triplets<R: BufRead>(r: R, dims: Option<(usize, usize)>) -> Result<DenseMatrix> {
    let mut header: Option<(usize, usize)> = None;
    let mut entries = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match fields.len() {
            2 if entries.is_empty() && header.is_none() => {
                let rows = parse_one::<usize>(fields[0], line_no)?;
                let cols = parse_one::<usize>(fields[1], line_no)?;
                header = Some((rows, cols));
            }
            3 => {
                let i = parse_one::<usize>(fields[0], line_no)?;
                let j = parse_one::<usize>(fields[1], line_no)?;
                let v = parse_one::<f64>(fields[2], line_no)?;
                entries.push((line_no, i, j, v));
            }
            _ => return Err(parse_err(line_no, "expected `i,j,value`")),
        }
    }
    let (rows, cols) = match header.or(dims) {
        Some(d) => d,
        None => entries.iter().fold((0, 0), |(r, c), &(_, i, j, _)| (r.max(i + 1), c.max(j + 1))),
    };
    let mut x = DenseMatrix::zeros(rows, cols);
    for (line_no, i, j, v) in entries {
        if i >= rows || j >= cols {
            return Err(parse_err(line_no, &format!("index ({i},{j}) outside {rows}x{cols}")));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
        x.set(i, j, v);
    }
    Ok(x)
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_one<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| parse_err(line, &format!("cannot parse `{s}`")))
}

fn parse_fields<T: std::str::FromStr>(line: &str, sep: fn(char) -> bool, line_no: usize) -> Result<Vec<T>> {
    line.split(sep)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(s, line_no))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_is_exact() {
        let x = DenseMatrix::from_rows(&[&[1.0, -2.5e-17], &[std::f64::consts::PI, 0.0]]);
        let mut buf = Vec::new();
        write_dense(&x, &mut buf).unwrap();
        assert_eq!(read_dense(&buf[..]).unwrap(), x);
    }

    #[test]
    fn dense_rejects_ragged_rows() {
        let text = "2 2\n1 2\n3\n";
        assert!(matches!(read_dense(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(read_dense("2 2\n1 2\n".as_bytes()).is_err());
    }

    #[test]
    fn triplets_round_trip_and_infer_shape() {
        let x = DenseMatrix::from_rows(&[&[0.0, 2.0, 0.0], &[0.5, 0.0, 0.0]]);
        let mut buf = Vec::new();
        write_triplets(&x, &mut buf).unwrap();
        assert_eq!(read_triplets(&buf[..], None).unwrap(), x);

        let inferred = read_triplets("0,1,2\n1,0,0.5\n".as_bytes(), None).unwrap();
        assert_eq!(inferred.shape(), (2, 2));
        assert!(read_triplets("3,0,1\n".as_bytes(), Some((2, 2))).is_err());
    }
}
