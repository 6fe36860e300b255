//! Direct solvers for sparse matrices stored in band form after a bandwidth-reducing ordering.
//!
//! Finite element operators on structured grids have a bandwidth of order `sqrt(N)`, so a
//! banded LU costs `O(N * bw^2)` and its solves `O(N * bw)`.

use super::sparse::{band_ordering, CsrMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn permute<T: Scalar>(perm: &Option<Vec<usize>>, b: &[T]) -> Vec<T> {
    match perm {
        Some(p) => p.iter().map(|&old| b[old]).collect(),
        None => b.to_vec(),
    }
}

fn unpermute<T: Scalar>(perm: &Option<Vec<usize>>, y: Vec<T>) -> Vec<T> {
    match perm {
        Some(p) => {
            let mut x = vec![T::zero(); y.len()];
            for (new, &old) in p.iter().enumerate() {
                x[old] = y[new];
            }
            x
        }
        None => y,
    }
}

/// LU factorization with partial pivoting of a banded matrix (LAPACK `gbtrf` layout, rows stored).
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
    piv: Vec<usize>,
    perm: Option<Vec<usize>>,
    rcond: T,
}

impl<T: Scalar> BandedLu<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "banded LU of non-square matrix",
                expected: n,
                found: a.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Empty("matrix to factor"));
        }
        let perm = band_ordering(a);
        let owned;
        let b = match &perm {
            Some(p) => {
                owned = a.permute_symmetric(p);
                &owned
            }
            None => a,
        };
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in b.triplets() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut data = vec![T::zero(); n * width];
        let idx = |r: usize, c: usize| r * width + (c + kl - r);
        for (i, j, v) in b.triplets() {
            data[idx(i, j)] += v;
        }

        // 1-norm of the (permuted) matrix for the condition estimate
        let mut colsum = vec![T::zero(); n];
        for (_, j, v) in b.triplets() {
            colsum[j] += v.abs();
        }
        let anorm = colsum.iter().fold(T::zero(), |m, &v| m.max(v));

        let mut piv = vec![0usize; n];
        let mut singular = false;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = data[idx(i, k)].abs();
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
                for c in k..=last_col {
                    data.swap(idx(k, c), idx(p, c));
                }
            }
            let pivot = data[idx(k, k)];
            for i in k + 1..=last_row {
                let l = data[idx(i, k)] / pivot;
                data[idx(i, k)] = l;
                if l != T::zero() {
                    for c in k + 1..=last_col {
                        let u = data[idx(k, c)];
                        data[idx(i, c)] -= l * u;
                    }
                }
            }
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data,
            piv,
            perm,
            rcond: T::zero(),
        };
        if singular {
            return Err(Error::Singular { rcond: 0.0 });
        }
        lu.rcond = lu.estimate_rcond(anorm);
        if !(lu.rcond > T::epsilon() * T::of(n as f64)) {
            return Err(Error::Singular {
                rcond: lu.rcond.as_f64(),
            });
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Reciprocal 1-norm condition estimate (Hager).
    pub fn rcond(&self) -> T {
        self.rcond
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.width + (c + self.kl - r)]
    }

    fn solve_permuted(&self, b: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.at(k, c) * b[c];
            }
            b[k] = s / self.at(k, k);
        }
    }

    fn solve_transpose_permuted(&self, b: &mut [T]) {
        let n = self.n;
        let span = self.kl + self.ku;
        for k in 0..n {
            let mut s = b[k];
            for j in k.saturating_sub(span)..k {
                s -= self.at(j, k) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let mut y = permute(&self.perm, b);
        self.solve_permuted(&mut y);
        unpermute(&self.perm, y)
    }

    /// Solves `Aᵀ x = b` with the same factorization.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let mut y = permute(&self.perm, b);
        self.solve_transpose_permuted(&mut y);
        unpermute(&self.perm, y)
    }

    fn estimate_rcond(&self, anorm: T) -> T {
        if anorm == T::zero() {
            return T::zero();
        }
        let n = self.n;
        let mut x = vec![T::one() / T::of(n as f64); n];
        let mut est = T::zero();
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve_permuted(&mut y);
            est = y.iter().map(|v| v.abs()).sum();
            if !est.is_finite() {
                return T::zero();
            }
            let mut z: Vec<T> = y
                .iter()
                .map(|&v| if v >= T::zero() { T::one() } else { -T::one() })
                .collect();
            self.solve_transpose_permuted(&mut z);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, T::zero()), |(bj, bv), (j, v)| {
                    if v.abs() > bv {
                        (j, v.abs())
                    } else {
                        (bj, bv)
                    }
                });
            let ztx: T = z.iter().zip(&x).map(|(a, b)| *a * *b).sum();
            if zmax <= ztx {
                break;
            }
            x.iter_mut().for_each(|v| *v = T::zero());
            x[jmax] = T::one();
        }
        if est == T::zero() {
            T::zero()
        } else {
            T::one() / (anorm * est)
        }
    }
}

/// Cholesky factorization `P Σ Pᵀ = L Lᵀ` of a banded symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    kd: usize,
    data: Vec<T>,
    perm: Option<Vec<usize>>,
}

impl<T: Scalar> BandedCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "Cholesky of non-square matrix",
                expected: n,
                found: a.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Empty("matrix to factor"));
        }
        let perm = band_ordering(a);
        let owned;
        let b = match &perm {
            Some(p) => {
                owned = a.permute_symmetric(p);
                &owned
            }
            None => a,
        };
        let kd = b.bandwidth();
        let w = kd + 1;
        let mut data = vec![T::zero(); n * w];
        for (i, j, v) in b.triplets() {
            if j <= i {
                data[i * w + (j + kd - i)] = v;
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            for j in lo..=i {
                let mut s = data[i * w + (j + kd - i)];
                for k in lo.max(j.saturating_sub(kd))..j {
                    s -= data[i * w + (k + kd - i)] * data[j * w + (k + kd - j)];
                }
                if j == i {
                    if !(s > T::zero()) {
                        return Err(Error::NotPositiveDefinite {
                            row: i,
                            pivot: s.as_f64(),
                        });
                    }
                    data[i * w + kd] = s.sqrt();
                } else {
                    data[i * w + (j + kd - i)] = s / data[j * w + kd];
                }
            }
        }
        Ok(Self { n, kd, data, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> T {
        self.data[i * (self.kd + 1) + (j + self.kd - i)]
    }

    fn forward(&self, y: &mut [T]) {
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(self.kd)..i {
                s -= self.l(i, k) * y[k];
            }
            y[i] = s / self.l(i, i);
        }
    }

    fn backward(&self, y: &mut [T]) {
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in i + 1..=(i + self.kd).min(self.n - 1) {
                s -= self.l(k, i) * y[k];
            }
            y[i] = s / self.l(i, i);
        }
    }

    /// Solves `Σ x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let mut y = permute(&self.perm, b);
        self.forward(&mut y);
        self.backward(&mut y);
        unpermute(&self.perm, y)
    }

    /// `U v` for the factor `U = Lᵀ P`, so that `‖U v‖₂² = vᵀ Σ v`.
    pub fn factor_mul(&self, v: &[T]) -> Vec<T> {
        let w = permute(&self.perm, v);
        (0..self.n)
            .map(|j| {
                let mut s = T::zero();
                for i in j..=(j + self.kd).min(self.n - 1) {
                    s += self.l(i, j) * w[i];
                }
                s
            })
            .collect()
    }

    /// `Uᵀ z = Pᵀ L z`; maps standard normal vectors to `N(0, Σ)` samples.
    pub fn factor_tr_mul(&self, z: &[T]) -> Vec<T> {
        assert_eq!(z.len(), self.n);
        let y: Vec<T> = (0..self.n)
            .map(|i| {
                let mut s = T::zero();
                for k in i.saturating_sub(self.kd)..=i {
                    s += self.l(i, k) * z[k];
                }
                s
            })
            .collect();
        unpermute(&self.perm, y)
    }

    /// `L⁻¹ P v`, so that `‖L⁻¹ P v‖₂² = vᵀ Σ⁻¹ v`.
    pub fn whiten(&self, v: &[T]) -> Vec<T> {
        let mut y = permute(&self.perm, v);
        self.forward(&mut y);
        y
    }

    /// Dense lower factor `L` together with the ordering (`perm[new] = old`), for small matrices.
    pub fn lower_dense(&self) -> (Vec<Vec<T>>, Option<Vec<usize>>) {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate().take(i + 1).skip(i.saturating_sub(self.kd)) {
                *v = self.l(i, k);
            }
        }
        (d, self.perm.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(m: usize, shift: f64) -> CsrMatrix<f64> {
        let n = m * m;
        let mut t = vec![];
        for j in 0..m {
            for i in 0..m {
                let r = j * m + i;
                t.push((r, r, 4.0 + shift));
                if i > 0 {
                    t.push((r, r - 1, -1.0));
                }
                if i + 1 < m {
                    t.push((r, r + 1, -1.0));
                }
                if j > 0 {
                    t.push((r, r - m, -1.0));
                }
                if j + 1 < m {
                    t.push((r, r + m, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn residual(a: &CsrMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n: usize = 40;
        let mut t: Vec<(usize, usize, f64)> = vec![];
        for i in 0..n {
            for j in i.saturating_sub(3)..(i + 5).min(n) {
                t.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let lu = BandedLu::factor(&a).unwrap();
        let x = lu.solve(&b);
        assert!(residual(&a, &x, &b) < 1e-9);
        let xt = lu.solve_transpose(&b);
        assert!(residual(&a.transpose(), &xt, &b) < 1e-9);
    }

    #[test]
    fn lu_detects_singular_matrix() {
        let a = CsrMatrix::from_dense_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(BandedLu::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn lu_handles_indefinite_shifted_laplacian_with_reordering() {
        let a = laplacian_2d(7, -3.3);
        let mut perm: Vec<usize> = (0..49).collect();
        perm.reverse();
        perm.swap(3, 30);
        let scrambled = a.permute_symmetric(&perm);
        let b: Vec<f64> = (0..49).map(|i| 1.0 + i as f64 * 0.1).collect();
        let lu = BandedLu::factor(&scrambled).unwrap();
        assert!(residual(&scrambled, &lu.solve(&b), &b) < 1e-9);
        assert!(lu.rcond() > 0.0 && lu.rcond() <= 1.0);
    }

    #[test]
    fn cholesky_factor_reproduces_quadratic_form() {
        let a = laplacian_2d(5, 0.5);
        let ch = BandedCholesky::factor(&a).unwrap();
        let v: Vec<f64> = (0..25).map(|i| (i as f64 * 0.7).cos()).collect();
        let av = a.mul_vec(&v);
        let quad: f64 = v.iter().zip(&av).map(|(p, q)| p * q).sum();
        let uv = ch.factor_mul(&v);
        let q2: f64 = uv.iter().map(|x| x * x).sum();
        assert!((quad - q2).abs() <= 1e-12 * quad);
        let x = ch.solve(&v);
        assert!(residual(&a, &x, &v) < 1e-10);
        let wv = ch.whiten(&v);
        let inv_quad: f64 = wv.iter().map(|x| x * x).sum();
        let direct: f64 = v.iter().zip(&x).map(|(p, q)| p * q).sum();
        assert!((inv_quad - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = laplacian_2d(4, -3.9);
        assert!(matches!(
            BandedCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
