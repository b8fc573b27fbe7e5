//! Small dense linear algebra: row-major matrices, Cholesky solves,
//! one-sided Jacobi SVD and the matrix exponential.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Contract(format!(
                    "ragged row {i}: {} != {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Contract(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Contract("cholesky of non-square matrix".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn cholesky_apply<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

pub fn solve_spd<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let l = cholesky(a)?;
    Ok(cholesky_apply(&l, b))
}

pub fn inverse_spd<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = T::zero());
        e[j] = T::one();
        let col = cholesky_apply(&l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let m = (inv[(i, j)] + inv[(j, i)]) / T::lit(2.0);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`, singular values
/// sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    /// `U diag(f(s)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let m = self.u.rows();
        let n = self.v.rows();
        let mut out = Matrix::zeros(m, n);
        for (r, &sv) in self.s.iter().enumerate() {
            let w = f(sv);
            if w == T::zero() {
                continue;
            }
            for i in 0..m {
                let ui = self.u[(i, r)] * w;
                if ui == T::zero() {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, x) in row.iter_mut().enumerate() {
                    *x += ui * self.v[(j, r)];
                }
            }
        }
        out
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let m = a.rows();
    let n = a.cols();
    // column-major working copy
    let mut w: Vec<T> = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).map(|(i, j)| a[(i, j)]).collect();
    let mut v: Vec<T> = vec![T::zero(); n * n];
    for j in 0..n {
        v[j * n + j] = T::one();
    }
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = &w[p * m..(p + 1) * m];
                    let cq = &w[q * m..(q + 1) * m];
                    let mut al = T::zero();
                    let mut be = T::zero();
                    let mut ga = T::zero();
                    for i in 0..m {
                        al += cp[i] * cp[i];
                        be += cq[i] * cq[i];
                        ga += cp[i] * cq[i];
                    }
                    (al, be, ga)
                };
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, m, p, q, c, s);
                rotate_columns(&mut v, n, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, T)> = (0..n)
        .map(|j| {
            let norm = w[j * m..(j + 1) * m]
                .iter()
                .map(|&x| x * x)
                .sum::<T>()
                .sqrt();
            (j, norm)
        })
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (r, &(j, norm)) in order.iter().enumerate() {
        s.push(norm);
        if norm > T::zero() {
            for i in 0..m {
                u[(i, r)] = w[j * m + i] / norm;
            }
        }
        for i in 0..n {
            vm[(i, r)] = v[j * n + i];
        }
    }
    Svd { u, s, v: vm }
}

#[inline]
fn rotate_columns<T: Real>(w: &mut [T], len: usize, p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = w.split_at_mut(q * len);
    let cp = &mut lo[p * len..(p + 1) * len];
    let cq = &mut hi[..len];
    for i in 0..len {
        let a = cp[i];
        let b = cq[i];
        cp[i] = c * a - s * b;
        cq[i] = s * a + c * b;
    }
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(a: &Matrix<T>) -> T {
    svd(a).s.first().copied().unwrap_or_else(T::zero)
}

/// `exp(A)` by scaling and squaring with a truncated Taylor series.
pub fn expm<T: Real>(a: &Matrix<T>, tol: T) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Contract("expm of non-square matrix".into()));
    }
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(Error::Numeric("expm of non-finite matrix".into()));
    }
    let mut squarings = 0u32;
    let half = T::lit(0.5);
    let mut scaled_norm = norm;
    while scaled_norm > half {
        scaled_norm = scaled_norm * half;
        squarings += 1;
    }
    let scaled = a.scale(T::one() / T::lit(2.0).powi(squarings as i32));
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=60 {
        term = term.matmul(&scaled)?.scale(T::one() / T::from_count(k));
        for (r, t) in result.data.iter_mut().zip(&term.data) {
            *r += *t;
        }
        if term.norm_one() <= tol * T::lit(1e-3) {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let x: Vec<f64> = solve_spd(&a, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!(x[1].abs() < 1e-14);
        let inv = inverse_spd(&a).unwrap();
        let id = a.matmul(&inv).unwrap();
        assert!(max_abs_diff(&id, &Matrix::identity(2)) < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::Numeric(_))));
    }

    #[test]
    fn svd_reconstructs_rectangular_matrices() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![-3.0, 1.0, 4.0],
            vec![0.0, 2.0, 2.0],
            vec![1.5, -1.0, 0.0],
        ])
        .unwrap();
        for m in [a.clone(), a.transpose()] {
            let d = svd(&m);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let back = d.reconstruct_with(|s| s);
            assert!(max_abs_diff(&back, &m) < 1e-12);
            let utu = d.u.transpose().matmul(&d.u).unwrap();
            assert!(max_abs_diff(&utu, &Matrix::identity(d.s.len())) < 1e-12);
        }
    }

    #[test]
    fn svd_of_rank_one() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let d = svd(&a);
        assert!((d.s[0] - (14.0f64 * 5.0).sqrt()).abs() < 1e-12);
        assert!(d.s[1].abs() < 1e-12);
    }

    #[test]
    fn expm_of_diagonal_and_generator() {
        let a = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let e = expm(&a, 1e-12).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - 2.0f64.exp()).abs() < 1e-11);
        // two-state generator: P00(t) = exp(-lambda t)
        let q = Matrix::from_rows(&[vec![-0.3, 0.3], vec![0.0, 0.0]]).unwrap();
        let p = expm(&q.scale(5.0), 1e-12).unwrap();
        assert!((p[(0, 0)] - (-1.5f64).exp()).abs() < 1e-12);
        assert!((p[(0, 0)] + p[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = svd(&a);
        assert!((d.s[0] - 2.0).abs() < 1e-6);
    }
}
