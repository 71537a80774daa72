//! LIBSVM text format: `label idx:val idx:val ...` with 1-based indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::SparseDataset;
use crate::error::DataError;

/// Parse a LIBSVM stream.
///
/// Labels `<= 0` become `-1`, all others `+1`; more than two distinct raw
/// labels is an error. `dim` overrides the inferred `max index + 1`.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<SparseDataset, DataError> {
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut max_index: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let raw: f64 = label_tok.parse().map_err(|_| DataError::Malformed {
            line: lineno,
            msg: format!("bad label {label_tok:?}"),
        })?;
        if !raw_labels.contains(&raw) {
            raw_labels.push(raw);
            if raw_labels.len() > 2 {
                return Err(DataError::Multiclass(raw_labels));
            }
        }
        labels.push(if raw <= 0.0 { -1.0 } else { 1.0 });

        let row_start = indices.len();
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| DataError::Malformed {
                line: lineno,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                msg: format!("bad index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(DataError::Malformed { line: lineno, msg: "indices are 1-based".into() });
            }
            let val: f64 = val.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                msg: format!("bad value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(DataError::Malformed { line: lineno, msg: format!("non-finite value {val}") });
            }
            let v = idx - 1;
            if let Some(p) = prev {
                if v <= p {
                    return Err(DataError::NonAscending { line: lineno, prev: p + 1, next: idx });
                }
            }
            prev = Some(v);
            if let Some(d) = dim {
                if v >= d {
                    return Err(DataError::IndexOutOfRange { line: lineno, index: idx, dim: d });
                }
            }
            if val != 0.0 {
                indices.push(v);
                values.push(val);
                max_index = Some(max_index.map_or(v, |m: usize| m.max(v)));
            }
        }
        debug_assert!(indices.len() >= row_start);
        indptr.push(indices.len());
    }

    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    let d = dim.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    SparseDataset::from_csr(d, indptr, indices, values, labels)
}

pub fn read_libsvm_file(path: impl AsRef<Path>, dim: Option<usize>) -> Result<SparseDataset, DataError> {
    let f = File::open(path)?;
    parse_libsvm(BufReader::new(f), dim)
}

/// Write in LIBSVM format. Values use the shortest exact decimal form, so
/// reading the output back reproduces the dataset bit for bit.
pub fn write_libsvm<W: Write>(ds: &SparseDataset, mut w: W) -> std::io::Result<()> {
    for i in 0..ds.n() {
        w.write_all(if ds.label(i) > 0.0 { b"+1" } else { b"-1" })?;
        let r = ds.row(i);
        for (&v, &a) in r.indices.iter().zip(r.values) {
            write!(w, " {}:{}", v + 1, a)?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}
