//! Sparse datasets, their support statistics, and synthetic generators.

mod cache;
mod libsvm;

pub use cache::{read_cache, write_cache, CACHE_VERSION};
pub use libsvm::{parse_libsvm, read_libsvm_file, write_libsvm};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::DataError;

/// Row-compressed design matrix with labels in `{-1, +1}`.
///
/// Row `i` is the support `T_i` of sample `i`, stored with strictly increasing
/// coordinate indices and no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    d: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

/// Borrowed view of a single sample.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&v, &a) in self.indices.iter().zip(self.values) {
            s += a * x[v];
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|a| a * a).sum()
    }
}

impl SparseDataset {
    /// Build from per-row `(index, value)` lists. Zero values are dropped.
    pub fn from_rows(
        d: usize,
        rows: Vec<Vec<(usize, f64)>>,
        labels: Vec<f64>,
    ) -> Result<Self, DataError> {
        if rows.len() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (v, a) in row {
                if a != 0.0 {
                    indices.push(v);
                    values.push(a);
                }
            }
            indptr.push(indices.len());
        }
        Self::from_csr(d, indptr, indices, values, labels)
    }

    /// Build from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        d: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if indptr.len() != n + 1 || indptr[0] != 0 || *indptr.last().unwrap() != indices.len() {
            return Err(DataError::Invalid("inconsistent row pointers".into()));
        }
        if indices.len() != values.len() {
            return Err(DataError::Invalid("indices and values differ in length".into()));
        }
        for i in 0..n {
            let (lo, hi) = (indptr[i], indptr[i + 1]);
            if lo > hi {
                return Err(DataError::Invalid(format!("row {i}: decreasing row pointer")));
            }
            for k in lo..hi {
                if indices[k] >= d {
                    return Err(DataError::IndexOutOfRange { line: i + 1, index: indices[k], dim: d });
                }
                if k > lo && indices[k] <= indices[k - 1] {
                    return Err(DataError::NonAscending {
                        line: i + 1,
                        prev: indices[k - 1],
                        next: indices[k],
                    });
                }
                if values[k] == 0.0 || !values[k].is_finite() {
                    return Err(DataError::Invalid(format!("row {i}: zero or non-finite value")));
                }
            }
        }
        if let Some(b) = labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return Err(DataError::Invalid(format!("label {b} not in {{-1, +1}}")));
        }
        Ok(Self { d, indptr, indices, values, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Ratio of stored entries to `n * d`.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.n() as f64 * self.d as f64)
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        Row { indices: &self.indices[lo..hi], values: &self.values[lo..hi] }
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub(crate) fn csr(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.indptr, &self.indices, &self.values)
    }

    /// Widen the coordinate space, e.g. so train and test splits agree.
    pub fn with_dim(mut self, d: usize) -> Result<Self, DataError> {
        if let Some(&max) = self.indices.iter().max() {
            if max >= d {
                return Err(DataError::Invalid(format!("dimension {d} smaller than max index {max} + 1")));
            }
        }
        self.d = d;
        Ok(self)
    }

    /// Dense copy of row `i`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        let r = self.row(i);
        for (&v, &a) in r.indices.iter().zip(r.values) {
            out[v] = a;
        }
        out
    }

    /// Content hash used to key cached optimal values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for &p in &self.indptr {
            h.update((p as u64).to_le_bytes());
        }
        for &v in &self.indices {
            h.update((v as u64).to_le_bytes());
        }
        for &a in &self.values {
            h.update(a.to_bits().to_le_bytes());
        }
        for &b in &self.labels {
            h.update(b.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Scale every row to unit Euclidean norm.
pub fn normalize_rows(ds: &SparseDataset) -> Result<SparseDataset, DataError> {
    let mut out = ds.clone();
    for i in 0..ds.n() {
        let (lo, hi) = (ds.indptr[i], ds.indptr[i + 1]);
        let norm = ds.values[lo..hi].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(DataError::ZeroRow(i));
        }
        if norm != 1.0 {
            for a in &mut out.values[lo..hi] {
                *a /= norm;
            }
        }
    }
    Ok(out)
}

/// Per-coordinate support statistics.
///
/// `d_diag[v] = n / counts[v]` is the diagonal of `D = ((1/n) sum_i P_i)^{-1}`
/// and `delta = max_v counts[v] / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportProfile {
    pub n: usize,
    pub counts: Vec<usize>,
    pub d_diag: Vec<f64>,
    pub delta: f64,
    /// For each compacted coordinate, its index in the original space.
    /// `None` when no coordinate was removed.
    pub original_index: Option<Vec<usize>>,
}

impl SupportProfile {
    pub fn max_d(&self) -> f64 {
        self.d_diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_d(&self) -> f64 {
        self.d_diag.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Map an original coordinate to its compacted index, if it survived.
    pub fn remap(&self, original: usize) -> Option<usize> {
        match &self.original_index {
            None => Some(original),
            Some(kept) => kept.binary_search(&original).ok(),
        }
    }

    /// Expand a compacted vector back into the original coordinate space.
    pub fn expand(&self, x: &[f64], original_dim: usize) -> Vec<f64> {
        match &self.original_index {
            None => x.to_vec(),
            Some(kept) => {
                let mut out = vec![0.0; original_dim];
                for (c, &o) in kept.iter().enumerate() {
                    out[o] = x[c];
                }
                out
            }
        }
    }
}

/// Count coordinate supports, drop coordinates nobody touches, and build `D`.
pub fn compute_support_profile(ds: &SparseDataset) -> (SparseDataset, SupportProfile) {
    let n = ds.n();
    let mut counts = vec![0usize; ds.d];
    for &v in &ds.indices {
        counts[v] += 1;
    }
    let (compacted, counts, original_index) = if counts.iter().any(|&c| c == 0) {
        let mut new_index = vec![usize::MAX; ds.d];
        let mut kept = Vec::new();
        for (v, &c) in counts.iter().enumerate() {
            if c > 0 {
                new_index[v] = kept.len();
                kept.push(v);
            }
        }
        let indices = ds.indices.iter().map(|&v| new_index[v]).collect();
        let compacted = SparseDataset {
            d: kept.len(),
            indptr: ds.indptr.clone(),
            indices,
            values: ds.values.clone(),
            labels: ds.labels.clone(),
        };
        let counts = kept.iter().map(|&v| counts[v]).collect();
        (compacted, counts, Some(kept))
    } else {
        (ds.clone(), counts, None)
    };
    let d_diag: Vec<f64> = counts.iter().map(|&c| n as f64 / c as f64).collect();
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let profile = SupportProfile {
        n,
        counts,
        d_diag,
        delta: max_count as f64 / n as f64,
        original_index,
    };
    (compacted, profile)
}

/// Identity design matrix with uniformly random labels.
pub fn gen_synthetic(n: usize, seed: u64) -> SparseDataset {
    assert!(n >= 1, "synthetic dataset needs n >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    SparseDataset {
        d: n,
        indptr: (0..=n).collect(),
        indices: (0..n).collect(),
        values: vec![1.0; n],
        labels,
    }
}

/// Random sparse design with a planted linear classifier.
///
/// Each entry is present independently with probability `density` (rows are
/// never empty), values are uniform on `[0.1, 1)`, and labels are the sign of
/// a random hyperplane flipped with probability `flip`.
pub fn gen_random_sparse(n: usize, d: usize, density: f64, flip: f64, seed: u64) -> SparseDataset {
    assert!(n >= 1 && d >= 1, "need n, d >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let start = indices.len();
        for v in 0..d {
            if density >= 1.0 || rng.gen_bool(density) {
                indices.push(v);
                values.push(rng.gen_range(0.1..1.0));
            }
        }
        if indices.len() == start {
            indices.push(rng.gen_range(0..d));
            values.push(rng.gen_range(0.1..1.0));
        }
        let margin: f64 = indices[start..].iter().zip(&values[start..]).map(|(&v, &a)| a * w[v]).sum();
        let mut b = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.gen_bool(flip) {
            b = -b;
        }
        labels.push(b);
        indptr.push(indices.len());
    }
    SparseDataset { d, indptr, indices, values, labels }
}

/// Fully dense toy dataset (every coordinate in every support).
pub fn gen_dense(n: usize, d: usize, seed: u64) -> SparseDataset {
    gen_random_sparse(n, d, 1.0, 0.1, seed)
}
