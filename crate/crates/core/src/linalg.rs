//! Small dense, tridiagonal and banded matrix kernels.
//!
//! Only what the space-time solver needs: row-major dense storage with a
//! partially pivoted LU, symmetric tridiagonal spatial matrices, and a
//! banded LU with partial pivoting (LAPACK `gbtrf` layout without the
//! column-major packing) for the Kronecker systems.

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { T::zero() })
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
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = self.data[i * self.cols + j] + v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect(),
        }
    }

    /// Multiplies row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[T]) -> Self {
        assert_eq!(factors.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| factors[i] * self.get(i, j))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64(&self) -> DenseMatrix<f64> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| to_f64(v)).collect(),
        }
    }

    pub fn lu(&self) -> Result<DenseLu<T>> {
        if self.rows != self.cols {
            return Err(Error::argument(format!(
                "LU needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, a.get(r, k).abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > T::zero()) {
                return Err(Error::Solver {
                    reason: format!("zero pivot in column {k}"),
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let akk = a.get(k, k);
            for r in k + 1..n {
                let factor = a.get(r, k) / akk;
                if factor == T::zero() {
                    continue;
                }
                a.set(r, k, factor);
                for j in k + 1..n {
                    let v = a.get(r, j) - factor * a.get(k, j);
                    a.set(r, j, v);
                }
            }
        }
        Ok(DenseLu { lu: a, perm })
    }
}

#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }

    /// Ratio of the largest to the smallest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        pivot_ratio((0..self.lu.rows).map(|i| self.lu.get(i, i)))
    }
}

fn pivot_ratio<T: Real>(pivots: impl Iterator<Item = T>) -> f64 {
    let (lo, hi) = pivots.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        let a = to_f64(p.abs());
        (lo.min(a), hi.max(a))
    });
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![T::zero(); off],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); off],
        }
    }

    pub fn constant(n: usize, sub: T, main: T, sup: T) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![sub; off],
            diag: vec![main; n],
            upper: vec![sup; off],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Entry `(i, j)`, zero outside the three diagonals.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[j]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            T::zero()
        }
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        if i == j {
            self.diag[i] = self.diag[i] + v;
        } else if j + 1 == i {
            self.lower[j] = self.lower[j] + v;
        } else if i + 1 == j {
            self.upper[i] = self.upper[i] + v;
        } else {
            panic!("entry ({i}, {j}) outside tridiagonal band");
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s = s + self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s = s + self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.len(), self.len(), |i, j| self.get(i, j))
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower == self.upper
    }

    /// Smallest Gershgorin lower bound over all rows.
    pub fn gershgorin_lower_bound(&self) -> T {
        (0..self.len())
            .map(|i| {
                let mut r = T::zero();
                if i > 0 {
                    r = r + self.lower[i - 1].abs();
                }
                if i + 1 < self.len() {
                    r = r + self.upper[i].abs();
                }
                self.diag[i] - r
            })
            .fold(T::infinity(), T::min)
    }
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
///
/// Each row keeps a window of `2*kl + ku + 1` entries starting at column
/// `i - kl`, which leaves room for the fill produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = (j + self.kl).checked_sub(i)?;
        (off < self.width).then_some(i * self.width + off)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.slot(i, j).expect("in band")]
        } else {
            T::zero()
        }
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let s = self.slot(i, j).expect("in band");
        self.data[s] = self.data[s] + v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j])
            })
            .collect()
    }

    /// Multiplies row `i` by `factors[i]`.
    pub fn scale_rows(&mut self, factors: &[T]) {
        assert_eq!(factors.len(), self.n);
        for (i, &f) in factors.iter().enumerate() {
            for v in &mut self.data[i * self.width..(i + 1) * self.width] {
                *v = *v * f;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn lu(&self) -> Result<BandedLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut a = self.clone();
        let mut pivots = vec![0usize; n];
        let at = |a: &BandedMatrix<T>, i: usize, j: usize| a.data[i * a.width + j + kl - i];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = at(&a, k, k).abs();
            for r in k + 1..=last_row {
                let v = at(&a, r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > T::zero()) {
                return Err(Error::Solver {
                    reason: format!("zero pivot in banded column {k}"),
                    condition: f64::INFINITY,
                });
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (sk, sp) = (k * a.width + j + kl - k, p * a.width + j + kl - p);
                    a.data.swap(sk, sp);
                }
            }
            let akk = at(&a, k, k);
            for r in k + 1..=last_row {
                let factor = at(&a, r, k) / akk;
                let srk = r * a.width + k + kl - r;
                a.data[srk] = factor;
                if factor == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let skj = k * a.width + j + kl - k;
                    let srj = r * a.width + j + kl - r;
                    a.data[srj] = a.data[srj] - factor * a.data[skj];
                }
            }
        }
        Ok(BandedLu { a, pivots })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    a: BandedMatrix<T>,
    pivots: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let a = &self.a;
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        assert_eq!(b.len(), n);
        let at = |i: usize, j: usize| a.data[i * a.width + j + kl - i];
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] = x[r] - at(r, k) * xk;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                s = s - at(i, j) * x[j];
            }
            x[i] = s / at(i, i);
        }
        x
    }

    pub fn pivot_ratio(&self) -> f64 {
        pivot_ratio((0..self.a.n).map(|i| self.a.get_raw_diag(i)))
    }
}

impl<T: Real> BandedMatrix<T> {
    #[inline]
    fn get_raw_diag(&self, i: usize) -> T {
        self.data[i * self.width + self.kl]
    }
}

pub fn norm2<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}
