//! Dense row-major matrices and the block constructions used to stack
//! agents and time steps: Kronecker products, block diagonals, block grids,
//! and the prediction matrices mapping an initial state and an input
//! sequence to the predicted states `x[1..T]`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>12.5?} ", self.data[i * self.cols + j])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Mat<T> {
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

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from a list of rows. An empty list gives a `0 x 0` matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn column(v: &[T]) -> Self {
        Mat {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn scalar(v: T) -> Self {
        Mat {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn col_vec(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl FnMut(T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, alpha: T) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| alpha * x).collect(),
        }
    }

    /// `(A + Aᵀ)/2`
    pub fn sym_part(&self) -> Self {
        let half = T::lit(0.5);
        Mat::from_fn(self.rows, self.cols, |i, j| {
            half * (self[(i, j)] + self[(j, i)])
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// `max |A − Aᵀ|` entry-wise.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| crate::scalar::dot(self.row(i), x))
            .collect()
    }

    /// `Aᵀx` without forming the transpose.
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(
            self.cols, other.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `Aᵀ B`
    pub fn tr_matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.rows, other.rows, "tr_matmul dimension mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `A^k` by repeated multiplication.
    pub fn pow(&self, k: usize) -> Mat<T> {
        assert!(self.is_square());
        let mut out = Mat::identity(self.rows);
        for _ in 0..k {
            out = out.matmul(self);
        }
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat<T> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        Mat::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat<T>) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "set_block out of range"
        );
        for i in 0..b.rows {
            let dst = &mut self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + b.cols];
            dst.copy_from_slice(b.row(i));
        }
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, b: &Mat<T>) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "add_block out of range"
        );
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] += b[(i, j)];
            }
        }
    }

    /// Rows `r0..r0+n` as a new matrix.
    pub fn row_block(&self, r0: usize, n: usize) -> Mat<T> {
        self.block(r0, 0, n, self.cols)
    }

    pub fn vstack(parts: &[&Mat<T>]) -> Result<Mat<T>> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::DimensionMismatch(format!(
                    "vstack: {} columns vs {cols}",
                    p.cols
                )));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn hstack(parts: &[&Mat<T>]) -> Result<Mat<T>> {
        let grid = vec![parts.iter().map(|m| (*m).clone()).collect::<Vec<_>>()];
        blkmat(&grid)
    }

    /// Approximate equality in max-abs norm.
    pub fn approx_eq(&self, other: &Mat<T>, tol: T) -> bool {
        self.shape() == other.shape() && (self - other).max_abs() <= tol
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "add dimension mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub dimension mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Scalar> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar> Neg for &Mat<T> {
    type Output = Mat<T>;
    fn neg(self) -> Mat<T> {
        self.scale(-T::one())
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (br, bc) = b.shape();
    Mat::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Block-diagonal arrangement of `blocks`; off-diagonal entries are zero.
pub fn blkdg<T: Scalar>(blocks: &[Mat<T>]) -> Mat<T> {
    assert!(!blocks.is_empty(), "blkdg of an empty list");
    let rows = blocks.iter().map(Mat::rows).sum();
    let cols = blocks.iter().map(Mat::cols).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.set_block(r, c, b);
        r += b.rows;
        c += b.cols;
    }
    out
}

/// Dense assembly of a grid of blocks. Every block in a grid row must share
/// its height and every block in a grid column its width.
pub fn blkmat<T: Scalar>(grid: &[Vec<Mat<T>>]) -> Result<Mat<T>> {
    let Some(first) = grid.first() else {
        return Ok(Mat::zeros(0, 0));
    };
    let widths: Vec<usize> = first.iter().map(Mat::cols).collect();
    let mut heights = Vec::with_capacity(grid.len());
    for (bi, row) in grid.iter().enumerate() {
        if row.len() != widths.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid row {bi} has {} blocks, expected {}",
                row.len(),
                widths.len()
            )));
        }
        let h = row.first().map_or(0, Mat::rows);
        for (bj, b) in row.iter().enumerate() {
            if b.rows != h {
                return Err(Error::DimensionMismatch(format!(
                    "block ({bi},{bj}) has height {}, expected {h}",
                    b.rows
                )));
            }
            if b.cols != widths[bj] {
                return Err(Error::DimensionMismatch(format!(
                    "block ({bi},{bj}) has width {}, expected {}",
                    b.cols, widths[bj]
                )));
            }
        }
        heights.push(h);
    }
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r = 0;
    for (row, h) in grid.iter().zip(&heights) {
        let mut c = 0;
        for (b, w) in row.iter().zip(&widths) {
            out.set_block(r, c, b);
            c += w;
        }
        r += h;
    }
    Ok(out)
}

/// Stack `col(A¹, …, A^T)`; row block `k` predicts `x[k+1]` from `x[0]`.
pub fn build_theta<T: Scalar>(a: &Mat<T>, horizon: usize) -> Mat<T> {
    assert!(a.is_square() && horizon >= 1);
    let n = a.rows;
    let mut out = Mat::zeros(n * horizon, n);
    let mut power = a.clone();
    for k in 0..horizon {
        out.set_block(k * n, 0, &power);
        power = power.matmul(a);
    }
    out
}

/// Lower block-triangular input-to-state map with block `(r, c) = A^{r−c} B`
/// for `r ≥ c`: row block `r` is `x[r+1]`, column block `c` is `u[c]`.
pub fn build_gamma<T: Scalar>(a: &Mat<T>, b: &Mat<T>, horizon: usize) -> Mat<T> {
    assert!(a.is_square() && b.rows == a.rows && horizon >= 1);
    let (n, m) = b.shape();
    let mut out = Mat::zeros(n * horizon, m * horizon);
    let mut first_col = Vec::with_capacity(horizon);
    let mut blk = b.clone();
    for _ in 0..horizon {
        first_col.push(blk.clone());
        blk = a.matmul(&blk);
    }
    for r in 0..horizon {
        for c in 0..=r {
            out.set_block(r * n, c * m, &first_col[r - c]);
        }
    }
    out
}
