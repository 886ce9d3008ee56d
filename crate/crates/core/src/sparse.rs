//! Compressed sparse row storage for square real matrices.

use rayon::prelude::*;

/// Nonzero count above which matrix-vector products are split across threads.
const PAR_NNZ_THRESHOLD: usize = 1 << 15;

/// Square sparse matrix in CSR layout with sorted, duplicate-free column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are combined with `combine`; explicit zeros are kept out.
    pub fn from_triplets_with(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        combine: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of bounds for n = {n}");
            if last == Some((i, j)) {
                let slot = values.last_mut().unwrap();
                *slot = combine(*slot, v);
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let mut m = CsrMatrix {
            n,
            indptr,
            indices,
            values,
        };
        m.drop_zeros();
        m
    }

    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        Self::from_triplets_with(n, triplets, |a, b| a + b)
    }

    pub fn zeros(n: usize) -> Self {
        CsrMatrix {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr[i + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(column, value)` pairs in column order.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row_dot = |i: usize| -> f64 { self.row(i).map(|(j, v)| v * x[j]).sum() };
        if self.nnz() >= PAR_NNZ_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Principal submatrix on the (sorted, distinct) index list `keep`.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut position = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            position[old] = new;
        }
        let triplets = keep.iter().enumerate().flat_map(|(new_i, &old_i)| {
            let position = &position;
            self.row(old_i).filter_map(move |(old_j, v)| {
                let new_j = position[old_j];
                (new_j != usize::MAX).then_some((new_i, new_j, v))
            })
        });
        CsrMatrix::from_triplets(keep.len(), triplets.collect::<Vec<_>>())
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_combined() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 0.5)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 0.5);
        assert_eq!(m.nnz(), 2);
        let m = CsrMatrix::from_triplets_with(2, vec![(0, 1, 1.0), (0, 1, 2.0)], f64::max);
        assert_eq!(m.get(0, 1), 2.0);
    }

    #[test]
    fn zeros_are_not_stored() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 1, 0.0), (2, 2, 1.0)]);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn matvec_and_submatrix() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0)],
        );
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![1.0, 3.0, 2.0]);
        let sub = m.principal_submatrix(&[1, 2]);
        assert_eq!(sub.dim(), 2);
        assert_eq!(sub.get(0, 1), 2.0);
        assert_eq!(sub.nnz(), 2);
        assert!(m.is_symmetric());
        assert_eq!(m.transpose(), m);
    }
}
