//! Lock-free shared iterate: one atomic 64-bit word per coordinate.
//!
//! Inside an epoch every access is `Relaxed`; callers synchronize at epoch
//! barriers (thread join or `std::sync::Barrier`), which order everything.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug)]
pub struct SharedVector {
    words: Vec<AtomicU64>,
}

impl SharedVector {
    pub fn zeros(d: usize) -> Self {
        Self::from_slice(&vec![0.0; d])
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { words: x.iter().map(|v| AtomicU64::new(v.to_bits())).collect() }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    #[inline]
    pub fn load(&self, v: usize) -> f64 {
        f64::from_bits(self.words[v].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn store(&self, v: usize, value: f64) {
        self.words[v].store(value.to_bits(), Ordering::Relaxed);
    }

    /// Atomic `x_v += delta` by compare-and-swap retry; concurrent adds to the
    /// same coordinate are never lost.
    #[inline]
    pub fn add(&self, v: usize, delta: f64) {
        let w = &self.words[v];
        let mut cur = w.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(cur) + delta).to_bits();
            match w.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return,
                Err(actual) => cur = actual,
            }
        }
    }

    /// Atomically replaces `x_v`, returning the previous value.
    #[inline]
    pub fn swap(&self, v: usize, value: f64) -> f64 {
        f64::from_bits(self.words[v].swap(value.to_bits(), Ordering::Relaxed))
    }

    /// Per-coordinate loads on `support` into `out`; no cross-coordinate
    /// consistency.
    #[inline]
    pub fn inconsistent_read_into(&self, support: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend(support.iter().map(|&v| self.load(v)));
    }

    pub fn inconsistent_read(&self, support: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(support.len());
        self.inconsistent_read_into(support, &mut out);
        out
    }

    /// Copy of every coordinate (quiescent use only gives a consistent view).
    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|v| self.load(v)).collect()
    }

    pub fn copy_from(&self, x: &[f64]) {
        assert_eq!(x.len(), self.len());
        for (v, &val) in x.iter().enumerate() {
            self.store(v, val);
        }
    }
}
