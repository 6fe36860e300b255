//! Compressed sparse row matrices.

use crate::error::{check_len, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1, k));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    pub fn from_dense_rows(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            let mut s = T::zero();
            for (&j, &a) in c.iter().zip(v) {
                s += a * x[j];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `Σ_q c_q M_q` over the union sparsity pattern of the terms.
    ///
    /// Entries are accumulated term by term in the given order.
    pub fn linear_combination(coeffs: &[T], terms: &[&CsrMatrix<T>]) -> Result<Self> {
        check_len("linear_combination coefficients", terms.len(), coeffs.len())?;
        let first = terms.first().expect("at least one term");
        let (nrows, ncols) = (first.nrows, first.ncols);
        for t in terms {
            check_len("linear_combination rows", nrows, t.nrows)?;
            check_len("linear_combination cols", ncols, t.ncols)?;
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut acc: Vec<T> = vec![T::zero(); ncols];
        let mut mark = vec![usize::MAX; ncols];
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..nrows {
            cols.clear();
            for (t, &c) in terms.iter().zip(coeffs) {
                let (ci, vi) = t.row(i);
                for (&j, &v) in ci.iter().zip(vi) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = T::zero();
                        cols.push(j);
                    }
                    acc[j] += c * v;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Maximum `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets()
            .map(|(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(T::min_positive_value());
        self.triplets()
            .all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * scale)
    }

    /// `P A Pᵀ` with `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let t: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (inv[i], inv[j], v))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern; `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let head = order.len();
        order.push(start);
        let mut k = head;
        while k < order.len() {
            let v = order[k];
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                order.push(u);
            }
            k += 1;
        }
    }
    order.reverse();
    order
}

/// Chooses between natural and RCM ordering, whichever yields the smaller bandwidth.
pub(crate) fn band_ordering<T: Scalar>(a: &CsrMatrix<T>) -> Option<Vec<usize>> {
    let natural = a.bandwidth();
    if natural <= 2 {
        return None;
    }
    let perm = reverse_cuthill_mckee(a);
    let permuted = a.permute_symmetric(&perm).bandwidth();
    (permuted < natural).then_some(perm)
}
