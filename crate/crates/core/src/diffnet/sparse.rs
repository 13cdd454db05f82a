use super::{DiffError, Tensor};

/// Square sparse matrix in coordinate form, entries sorted by (row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Builds from unsorted triplets; duplicate coordinates are summed.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self, DiffError> {
        if entries.iter().any(|&(r, c, _)| r >= n || c >= n) {
            return Err(DiffError::ShapeMismatch(format!("sparse index outside {n}x{n}")));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        Ok(Self { n, entries: merged })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(r, c)))
            .map_or(0.0, |i| self.entries[i].2)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            t.set(r, c, v);
        }
        t
    }

    /// Row permutation `P·A·Pᵀ` where `perm[i]` is the new index of old vertex `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (perm[r], perm[c], v))
            .collect();
        // Indices are a permutation of valid ones, so this cannot fail.
        Self::from_triplets(self.n, entries).expect("permutation keeps indices in range")
    }

    /// `self · x` (or `selfᵀ · x` when `transpose`).
    pub fn matmul_dense(&self, x: &Tensor, transpose: bool) -> Result<Tensor, DiffError> {
        if x.rows() != self.n {
            return Err(DiffError::ShapeMismatch(format!(
                "sparse {n}x{n} by {}x{}",
                x.rows(),
                x.cols(),
                n = self.n
            )));
        }
        let f = x.cols();
        let mut out = Tensor::zeros(self.n, f);
        let src = x.data();
        let dst = out.data_mut();
        for &(r, c, v) in &self.entries {
            let (to, from) = if transpose { (c, r) } else { (r, c) };
            let d = &mut dst[to * f..(to + 1) * f];
            let s = &src[from * f..(from + 1) * f];
            for (a, b) in d.iter_mut().zip(s) {
                *a += v * b;
            }
        }
        Ok(out)
    }
}
