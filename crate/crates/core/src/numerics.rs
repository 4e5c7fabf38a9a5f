//! Dense real-matrix utilities: LU factorization with partial pivoting,
//! signed log-determinant and inversion.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Pivots with a magnitude below this value are treated as exact zeros.
pub const SINGULAR_PIVOT: f64 = 1e-300;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("invalid matrix shape {rows}x{cols} for {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular (pivot {pivot} vanished)")]
    Singular { pivot: usize },
}

/// Row-major dense matrix of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(NumericsError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Shape {
                rows: rows.len(),
                cols,
                len: rows.iter().map(Vec::len).sum(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, NumericsError> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self::new(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != rhs.rows {
            return Err(NumericsError::Shape {
                rows: rhs.rows,
                cols: rhs.cols,
                len: self.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Largest absolute entry-wise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> Option<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    fn require_square(&self) -> Result<usize, NumericsError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(NumericsError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

/// Packed LU factorization `P·A = L·U`.
///
/// `L` is unit lower triangular and stored below the diagonal of `packed`,
/// `U` occupies the diagonal and above. `perm[i]` is the row of `A` that
/// ended up in row `i`.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    packed: Matrix,
    perm: Vec<usize>,
    swaps: usize,
    singular_pivot: Option<usize>,
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.packed.rows
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Index of the first vanishing pivot, if any.
    pub fn singular_pivot(&self) -> Option<usize> {
        self.singular_pivot
    }

    pub fn is_singular(&self) -> bool {
        self.singular_pivot.is_some()
    }

    /// Sign of the row permutation.
    pub fn permutation_sign(&self) -> f64 {
        if self.swaps.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn lower(&self) -> Matrix {
        let n = self.dim();
        let mut l = Matrix::identity(n);
        for i in 0..n {
            for j in 0..i {
                l[(i, j)] = self.packed[(i, j)];
            }
        }
        l
    }

    pub fn upper(&self) -> Matrix {
        let n = self.dim();
        let mut u = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                u[(i, j)] = self.packed[(i, j)];
            }
        }
        u
    }

    pub fn permutation_matrix(&self) -> Matrix {
        let n = self.dim();
        let mut p = Matrix::zeros(n, n);
        for (i, &src) in self.perm.iter().enumerate() {
            p[(i, src)] = 1.0;
        }
        p
    }

    /// `(sign, log|det|)`; `(0, -inf)` for a singular factorization.
    pub fn sign_log_det(&self) -> (i8, f64) {
        if self.is_singular() {
            return (0, f64::NEG_INFINITY);
        }
        let mut sign = self.permutation_sign();
        let mut log_abs = 0.0;
        for i in 0..self.dim() {
            let u = self.packed[(i, i)];
            if u < 0.0 {
                sign = -sign;
            }
            log_abs += u.abs().ln();
        }
        (if sign > 0.0 { 1 } else { -1 }, log_abs)
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), NumericsError> {
        if let Some(pivot) = self.singular_pivot {
            return Err(NumericsError::Singular { pivot });
        }
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side has the wrong length");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.packed.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.packed.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        b.copy_from_slice(&x);
        Ok(())
    }

    pub fn inverse(&self) -> Result<Matrix, NumericsError> {
        if let Some(pivot) = self.singular_pivot {
            return Err(NumericsError::Singular { pivot });
        }
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Doolittle LU factorization with partial (row) pivoting.
///
/// Elimination stops at the first pivot whose magnitude is below
/// [`SINGULAR_PIVOT`]; the factorization is then flagged singular.
pub fn lu_factorize(m: &Matrix) -> Result<LuFactorization, NumericsError> {
    let n = m.require_square()?;
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut swaps = 0;
    let mut singular_pivot = None;

    for k in 0..n {
        let (pivot_row, pivot_abs) = (k..n)
            .map(|r| (r, a[(r, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs < SINGULAR_PIVOT {
            singular_pivot = Some(k);
            break;
        }
        if pivot_row != k {
            for c in 0..n {
                a.data.swap(k * n + c, pivot_row * n + c);
            }
            perm.swap(k, pivot_row);
            swaps += 1;
        }
        let pivot = a[(k, k)];
        for r in k + 1..n {
            let factor = a[(r, k)] / pivot;
            a[(r, k)] = factor;
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.data.split_at_mut(r * n);
            let src = &upper[k * n + k + 1..k * n + n];
            let dst = &mut lower[k + 1..n];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d -= factor * s;
            }
        }
    }

    Ok(LuFactorization {
        packed: a,
        perm,
        swaps,
        singular_pivot,
    })
}

/// Sign and log-magnitude of the determinant; sign is 0 iff singular.
pub fn sign_log_det(m: &Matrix) -> Result<(i8, f64), NumericsError> {
    Ok(lu_factorize(m)?.sign_log_det())
}

pub fn inverse(m: &Matrix) -> Result<Matrix, NumericsError> {
    lu_factorize(m)?.inverse()
}
