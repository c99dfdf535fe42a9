//! Compensated summation and the two execution backends.
//!
//! Every spectral sum is split into fixed-size chunks of coordinates. Each
//! chunk is accumulated in descending index order with Neumaier compensation,
//! and the chunk totals are then folded in descending chunk order. The chunk
//! layout does not depend on the backend or on the number of worker threads,
//! so the sequential and parallel paths produce bit-identical results.

use std::ops::AddAssign;

/// Number of coordinates per reduction chunk.
pub const CHUNK: usize = 4096;

/// Kahan–Babuška–Neumaier running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl AddAssign<f64> for Neumaier {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

/// Compensated sum of a slice, accumulated from the last element to the first.
pub fn compensated_sum_rev(values: &[f64]) -> f64 {
    let mut acc = Neumaier::new();
    for &v in values.iter().rev() {
        acc += v;
    }
    acc.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Backend {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Backend::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Backend::Sequential
        }
    }
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Sequential => "sequential",
            #[cfg(feature = "parallel")]
            Backend::Parallel => "parallel",
        }
    }
}

fn chunk_total<F: Fn(usize) -> f64>(k: usize, n: usize, term: &F) -> f64 {
    let start = k * CHUNK;
    let end = ((k + 1) * CHUNK).min(n);
    let mut acc = Neumaier::new();
    for i in (start..end).rev() {
        acc += term(i);
    }
    acc.total()
}

/// `sum_{i < n} term(i)` with the fixed chunked reduction tree.
///
/// Indices are zero-based; coordinate `j` of the sequence model is `i + 1`.
pub fn spectral_sum_with<F>(backend: Backend, n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = map_indexed_with(backend, chunks, |k| chunk_total(k, n, &term));
    compensated_sum_rev(&partials)
}

pub fn spectral_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    spectral_sum_with(Backend::default(), n, term)
}

/// Evaluates `f(0), ..., f(n-1)` and returns them in index order.
pub fn map_indexed_with<T, F>(backend: Backend, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match backend {
        Backend::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Backend::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_with(Backend::default(), n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut acc = Neumaier::new();
        acc += 1e100;
        acc += 1.0;
        acc += -1e100;
        assert_eq!(acc.total(), 1.0);
    }

    #[test]
    fn harmonic_tail_is_accurate() {
        // sum_{j=1}^{n} 1/j^2 against pi^2/6 - tail, tail ~ 1/n - 1/(2n^2) + 1/(6n^3)
        let n = 1_000_000usize;
        let s = spectral_sum(n, |i| {
            let j = (i + 1) as f64;
            1.0 / (j * j)
        });
        let nf = n as f64;
        let tail = 1.0 / nf - 0.5 / (nf * nf) + 1.0 / (6.0 * nf * nf * nf);
        let expected = std::f64::consts::PI.powi(2) / 6.0 - tail;
        assert!((s - expected).abs() < 1e-15, "{s} vs {expected}");
    }

    #[test]
    fn backends_are_bit_identical() {
        let n = 3 * CHUNK + 17;
        let term = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let seq = spectral_sum_with(Backend::Sequential, n, term);
        let dflt = spectral_sum_with(Backend::default(), n, term);
        assert_eq!(seq.to_bits(), dflt.to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v = map_indexed(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn empty_sum_is_zero() {
        assert_eq!(spectral_sum(0, |_| 1.0), 0.0);
    }
}
