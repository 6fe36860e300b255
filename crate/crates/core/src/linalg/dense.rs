//! Small dense matrices for reduced (offline/online) quantities.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DMatrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    pub fn from_columns(nrows: usize, cols: &[Vec<T>]) -> Self {
        let mut m = Self::zeros(nrows, 0);
        for c in cols {
            m.push_column(c);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        Self::from_fn(nrows, ncols, |i, j| rows[i][j])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> {
        (0..self.ncols).map(move |j| self.col(j))
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.ncols).map(|j| self[(i, j)]).collect()
    }

    pub fn push_column(&mut self, c: &[T]) {
        assert_eq!(c.len(), self.nrows, "column length");
        self.data.extend_from_slice(c);
        self.ncols += 1;
    }

    /// First `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        assert!(n <= self.ncols);
        Self {
            nrows: self.nrows,
            ncols: n,
            data: self.data[..n * self.nrows].to_vec(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut m = Self::zeros(self.nrows, 0);
        for &j in idx {
            m.push_column(self.col(j));
        }
        m
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![T::zero(); self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != T::zero() {
                for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                    *yi += a * xj;
                }
            }
        }
        y
    }

    /// `selfᵀ x`.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        self.columns().map(|c| dot(c, x)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut m = Self::zeros(self.nrows, 0);
        for c in other.columns() {
            m.push_column(&self.mul_vec(c));
        }
        m
    }

    /// `selfᵀ other`.
    pub fn tr_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.nrows, other.nrows);
        Self::from_fn(self.ncols, other.ncols, |i, j| dot(self.col(i), other.col(j)))
    }

    pub fn scale_add(&mut self, alpha: T, other: &Self) {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn norm1(&self) -> T {
        self.columns()
            .map(|c| c.iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), |m, v| m.max(v))
    }
}

impl<T> Index<(usize, usize)> for DMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.nrows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for DMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.nrows + i]
    }
}

/// Reduced systems whose reciprocal condition estimate falls below this are rejected.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Dense LU with partial pivoting and a reciprocal 1-norm condition estimate.
#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    lu: DMatrix<T>,
    piv: Vec<usize>,
    rcond: T,
}

impl<T: Scalar> DenseLu<T> {
    /// Factors and rejects matrices with `rcond < threshold`.
    pub fn factor_checked(a: DMatrix<T>, threshold: f64) -> Result<Self> {
        let lu = Self::factor(a);
        if !(lu.rcond.as_f64() >= threshold) {
            return Err(Error::Singular {
                rcond: lu.rcond.as_f64(),
            });
        }
        Ok(lu)
    }

    pub fn factor(mut a: DMatrix<T>) -> Self {
        let n = a.nrows;
        assert_eq!(n, a.ncols, "LU of a non-square matrix");
        let anorm = a.norm1();
        let mut piv = vec![0usize; n];
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == T::zero() {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(j * n + k, j * n + p);
                }
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                a[(i, k)] /= pivot;
            }
            for j in k + 1..n {
                let akj = a[(k, j)];
                if akj != T::zero() {
                    let (head, tail) = a.data.split_at_mut(j * n);
                    let colk = &head[k * n..(k + 1) * n];
                    let colj = &mut tail[..n];
                    for i in k + 1..n {
                        colj[i] -= colk[i] * akj;
                    }
                }
            }
        }
        let mut lu = Self {
            lu: a,
            piv,
            rcond: T::zero(),
        };
        if !singular && n > 0 {
            lu.rcond = lu.estimate_rcond(anorm);
        }
        lu
    }

    pub fn rcond(&self) -> T {
        self.rcond
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.lu.nrows;
        assert_eq!(x.len(), n);
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for j in 0..n {
            let xj = x[j];
            if xj != T::zero() {
                let c = self.lu.col(j);
                for i in j + 1..n {
                    x[i] -= c[i] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let c = self.lu.col(j);
            x[j] /= c[j];
            let xj = x[j];
            if xj != T::zero() {
                for i in 0..j {
                    x[i] -= c[i] * xj;
                }
            }
        }
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.nrows;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // Uᵀ y = b
        for j in 0..n {
            let c = self.lu.col(j);
            let mut s = x[j];
            for i in 0..j {
                s -= c[i] * x[i];
            }
            x[j] = s / c[j];
        }
        // Lᵀ z = y
        for j in (0..n).rev() {
            let c = self.lu.col(j);
            let mut s = x[j];
            for i in j + 1..n {
                s -= c[i] * x[i];
            }
            x[j] = s;
        }
        for k in (0..n).rev() {
            x.swap(k, self.piv[k]);
        }
        x
    }

    fn estimate_rcond(&self, anorm: T) -> T {
        let n = self.lu.nrows;
        if anorm == T::zero() {
            return T::zero();
        }
        let mut x = vec![T::one() / T::of(n as f64); n];
        let mut est = T::zero();
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum();
            if !est.is_finite() {
                return T::zero();
            }
            let xi: Vec<T> = y
                .iter()
                .map(|&v| if v >= T::zero() { T::one() } else { -T::one() })
                .collect();
            let z = self.solve_transpose(&xi);
            let (jmax, zmax) = z.iter().enumerate().fold((0, T::zero()), |acc, (j, v)| {
                if v.abs() > acc.1 {
                    (j, v.abs())
                } else {
                    acc
                }
            });
            if zmax <= dot(&z, &x) {
                break;
            }
            x = vec![T::zero(); n];
            x[jmax] = T::one();
        }
        if est == T::zero() || !est.is_finite() {
            T::zero()
        } else {
            T::one() / (anorm * est)
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by Householder tridiagonalization and implicit QL.
///
/// Returns eigenvalues in descending order with the matching eigenvectors as columns.
pub fn symmetric_eigen<T: Scalar>(a: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return (vec![], DMatrix::zeros(0, 0));
    }
    // row-major working copy, symmetrized
    let mut z: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| (a[(i, j)] + a[(j, i)]) * T::of(0.5)).collect())
        .collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut z, &mut d, &mut e);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| z[i][order[j]]);
    (values, vectors)
}

// Householder reduction to tridiagonal form (EISPACK tred2).
fn tred2<T: Scalar>(v: &mut [Vec<T>], d: &mut [T], e: &mut [T]) {
    let n = d.len();
    d[..n].copy_from_slice(&v[n - 1][..n]);
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = T::zero();
                v[j][i] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let dk = d[k];
                    let ek = e[k];
                    v[k][j] -= f * ek + g * dk;
                }
                d[j] = v[i - 1][j];
                v[i][j] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    let dk = d[k];
                    v[k][j] -= g * dk;
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = T::zero();
    }
    v[n - 1][n - 1] = T::one();
    e[0] = T::zero();
}

// Implicit QL iterations on the tridiagonal matrix (EISPACK tql2).
fn tql2<T: Scalar>(v: &mut [Vec<T>], d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    break;
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::of(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn lu_solves_and_transposes() {
        let a = random(7, 7, 1);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.0).collect();
        let lu = DenseLu::factor(a.clone());
        let x = lu.solve(&b);
        let r: f64 = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        assert!(r < 1e-12);
        let xt = lu.solve_transpose(&b);
        let rt: f64 = a.tr_mul_vec(&xt).iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        assert!(rt < 1e-12);
    }

    #[test]
    fn rcond_matches_explicit_inverse_order_of_magnitude() {
        let a = random(6, 6, 9);
        let lu = DenseLu::factor(a.clone());
        let inv = DMatrix::from_columns(
            6,
            &(0..6)
                .map(|j| {
                    let mut e = vec![0.0; 6];
                    e[j] = 1.0;
                    lu.solve(&e)
                })
                .collect::<Vec<_>>(),
        );
        let exact = 1.0 / (a.norm1() * inv.norm1());
        // Hager's estimate is a lower bound on ‖A⁻¹‖₁, typically within a small factor
        assert!(lu.rcond() >= exact * (1.0 - 1e-12));
        assert!(lu.rcond() <= exact * 10.0);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0 + 1e-15]]);
        assert!(matches!(
            DenseLu::factor_checked(a, RCOND_THRESHOLD),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn eigen_decomposition_of_random_symmetric() {
        let b = random(9, 9, 4);
        let a = b.tr_matmul(&b);
        let (vals, vecs) = symmetric_eigen(&a);
        for w in vals.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for (k, &lam) in vals.iter().enumerate() {
            let v = vecs.col(k);
            let av = a.mul_vec(v);
            let r: f64 = av.iter().zip(v).map(|(p, q)| (p - lam * q).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-10 * vals[0]);
        }
        let gram = vecs.tr_matmul(&vecs);
        for i in 0..9 {
            for j in 0..9 {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_of_one_by_one_and_diagonal() {
        let (v, _) = symmetric_eigen(&DMatrix::from_rows(&[vec![2.5]]));
        assert_eq!(v, vec![2.5]);
        let (v, w) = symmetric_eigen(&DMatrix::from_rows(&[vec![1.0_f64, 0.0], vec![0.0, 3.0]]));
        assert_eq!(v, vec![3.0, 1.0]);
        assert!((w[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
