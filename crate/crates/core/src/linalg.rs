//! Small dense matrices (dimension <= 8 in practice).

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::scalar::{Field, Real};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        list.finish()
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Field> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Mat {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().cloned().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> Vec<T> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }

    pub fn col(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)].clone();
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)].clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)].clone() + a.clone() * other[(k, j)].clone();
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        (0..self.rows)
            .map(|r| {
                (0..self.cols).fold(T::zero(), |acc, c| {
                    acc + self[(r, c)].clone() * v[c].clone()
                })
            })
            .collect()
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        let mut out = Self::zeros(self.rows, end - start);
        for r in 0..self.rows {
            for c in start..end {
                out[(r, c - start)] = self[(r, c)].clone();
            }
        }
        out
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(Field::magnitude).fold(0.0, f64::max)
    }

    /// Gauss-Jordan inverse with partial pivoting. `None` when a pivot is
    /// negligible relative to `tol * max|entry|` (exactly zero for exact types).
    pub fn inverse(&self, tol: f64) -> Option<Self> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let scale = self.max_magnitude();
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| {
                a[(i, col)]
                    .magnitude()
                    .partial_cmp(&a[(j, col)].magnitude())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a[(pivot, col)].is_negligible(scale, tol) {
                return None;
            }
            a.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let p = a[(col, col)].clone();
            for c in 0..n {
                a[(col, c)] = a[(col, c)].clone() / p.clone();
                inv[(col, c)] = inv[(col, c)].clone() / p.clone();
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)].clone();
                if f.is_zero() {
                    continue;
                }
                for c in 0..n {
                    a[(r, c)] = a[(r, c)].clone() - f.clone() * a[(col, c)].clone();
                    inv[(r, c)] = inv[(r, c)].clone() - f.clone() * inv[(col, c)].clone();
                }
            }
        }
        Some(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn map<U: Field>(&self, f: impl Fn(&T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Result of elimination with full (row and column) pivoting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pivots {
    pub rank: usize,
    /// Pivot columns in the order they were chosen.
    pub columns: Vec<usize>,
}

/// Rank and pivot columns of `m` by elimination with complete pivoting.
/// Entries below `tol * max|entry|` are treated as zero.
pub fn pivot_columns<T: Field>(m: &Mat<T>, tol: f64) -> Pivots {
    let scale = m.max_magnitude();
    let mut a = m.clone();
    let mut free_rows: Vec<usize> = (0..a.rows).collect();
    let mut free_cols: Vec<usize> = (0..a.cols).collect();
    let mut columns = Vec::new();
    while !free_rows.is_empty() && !free_cols.is_empty() {
        let mut best: Option<(usize, usize, f64)> = None;
        for &r in &free_rows {
            for &c in &free_cols {
                let mag = a[(r, c)].magnitude();
                if best.is_none_or(|(_, _, b)| mag > b) {
                    best = Some((r, c, mag));
                }
            }
        }
        let (pr, pc, _) = best.expect("non-empty search");
        if a[(pr, pc)].is_negligible(scale, tol) {
            break;
        }
        let p = a[(pr, pc)].clone();
        for &r in &free_rows {
            if r == pr {
                continue;
            }
            let f = a[(r, pc)].clone() / p.clone();
            for c in 0..a.cols {
                a[(r, c)] = a[(r, c)].clone() - f.clone() * a[(pr, c)].clone();
            }
        }
        free_rows.retain(|&r| r != pr);
        free_cols.retain(|&c| c != pc);
        columns.push(pc);
    }
    Pivots {
        rank: columns.len(),
        columns,
    }
}

impl<T: Real> Mat<T> {
    pub fn frobenius(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn symmetry_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; eigenvector `k`
/// is column `k` of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Mat<T>,
}

impl<T: Real> SymmetricEigen<T> {
    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.col(k)
    }
}

const MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi eigendecomposition. Only the lower triangle's mirror image
/// is assumed; the input is symmetrized first.
pub fn symmetric_eigen<T: Real>(m: &Mat<T>) -> SymmetricEigen<T> {
    assert_eq!(m.rows, m.cols, "eigen of non-square matrix");
    let n = m.rows;
    let half = T::lit(0.5);
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..i {
            let s = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let mut v = Mat::<T>::identity(n);
    let frob = a.frobenius();
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off = off + a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= T::epsilon() * frob * T::lit(1e-2) || off.is_zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.is_zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta.is_infinite() { T::zero() } else { t };
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .partial_cmp(&a[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    SymmetricEigen { values, vectors }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
