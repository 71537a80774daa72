//! Versioned little-endian binary cache for parsed datasets.
//!
//! Layout: magic `ACSVRGDS`, `u32` version, `u64` n, d, nnz, then labels
//! (n × f64), row pointers ((n+1) × u64), indices (nnz × u64), values
//! (nnz × f64).

use std::io::{Read, Write};

use super::SparseDataset;
use crate::error::DataError;

const MAGIC: &[u8; 8] = b"ACSVRGDS";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache<W: Write>(ds: &SparseDataset, mut w: W) -> std::io::Result<()> {
    let (indptr, indices, values) = ds.csr();
    w.write_all(MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    for x in [ds.n(), ds.d(), ds.nnz()] {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    for &b in ds.labels() {
        w.write_all(&b.to_bits().to_le_bytes())?;
    }
    for &p in indptr {
        w.write_all(&(p as u64).to_le_bytes())?;
    }
    for &v in indices {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for &a in values {
        w.write_all(&a.to_bits().to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DataError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| DataError::Cache(format!("truncated: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_vec<R: Read, T>(r: &mut R, len: usize, f: impl Fn(u64) -> T) -> Result<Vec<T>, DataError> {
    (0..len).map(|_| read_u64(r).map(&f)).collect()
}

pub fn read_cache<R: Read>(mut r: R) -> Result<SparseDataset, DataError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| DataError::Cache(format!("truncated: {e}")))?;
    if &magic != MAGIC {
        return Err(DataError::Cache("bad magic".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb).map_err(|e| DataError::Cache(format!("truncated: {e}")))?;
    let version = u32::from_le_bytes(vb);
    if version != CACHE_VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let nnz = read_u64(&mut r)? as usize;
    let labels = read_vec(&mut r, n, f64::from_bits)?;
    let indptr = read_vec(&mut r, n + 1, |x| x as usize)?;
    let indices = read_vec(&mut r, nnz, |x| x as usize)?;
    let values = read_vec(&mut r, nnz, f64::from_bits)?;
    SparseDataset::from_csr(d, indptr, indices, values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_random_sparse;

    #[test]
    fn round_trip_is_exact() {
        let ds = gen_random_sparse(40, 13, 0.3, 0.1, 9);
        let mut buf = Vec::new();
        write_cache(&ds, &mut buf).unwrap();
        assert_eq!(read_cache(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_header() {
        let ds = gen_random_sparse(4, 3, 0.5, 0.1, 1);
        let mut buf = Vec::new();
        write_cache(&ds, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_cache(&bad[..]).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_cache(&bad[..]).is_err());
        assert!(read_cache(&buf[..buf.len() - 3]).is_err());
    }
}
