//! Dense row-major matrices and a pivoted Gaussian elimination solver.
//!
//! Every linear system in this crate is small (at most `n + 1` equations,
//! one system per path breakpoint), so a plain dense factorization with
//! partial pivoting is the right tool.

use thiserror::Error;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Builds a matrix from row slices. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            assert_eq!(row.len(), ncols, "ragged rows in Mat::from_rows");
            data.extend_from_slice(row);
        }
        Mat { nrows, ncols, data }
    }

    /// Builds a matrix from column slices. Panics if the columns are ragged.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, Vec::len);
        let mut m = Mat::zeros(nrows, ncols);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), nrows, "ragged columns in Mat::from_columns");
            for (i, &v) in col.iter().enumerate() {
                *m.at_mut(i, j) = v;
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.ncols.max(1))
    }

    /// `A v` for a vector of length `ncols`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^T v` for a vector of length `nrows`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.nrows, "t_matvec dimension mismatch");
        let mut out = vec![0.0; self.ncols];
        for (row, &vi) in self.rows().zip(v) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }

    /// Operator infinity norm (maximum absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).iter().map(|a| a.abs()).sum())
            .fold(0.0, f64::max)
    }
}

/// A pivot fell below `tol = pivot_rel_tol * inf_norm(A)` during elimination.
#[derive(Debug, Clone, Error)]
#[error("singular linear system: pivot {pivot:.3e} below tolerance {tol:.3e} in column {col}")]
pub struct SingularSystem {
    pub pivot: f64,
    pub tol: f64,
    pub col: usize,
}

/// Solves `A x = b` for each right-hand side by Gaussian elimination with
/// partial pivoting. `A` must be square; a zero-dimensional system yields
/// empty solutions.
pub fn solve_dense(
    a: &Mat,
    rhs: &[&[f64]],
    pivot_rel_tol: f64,
) -> Result<Vec<Vec<f64>>, SingularSystem> {
    assert_eq!(a.nrows, a.ncols, "solve_dense requires a square matrix");
    let n = a.nrows;
    if n == 0 {
        return Ok(rhs.iter().map(|_| Vec::new()).collect());
    }
    for b in rhs {
        assert_eq!(b.len(), n, "right-hand side length mismatch");
    }

    let tol = pivot_rel_tol * a.inf_norm().max(f64::MIN_POSITIVE);
    let mut work = a.clone();
    let mut bs: Vec<Vec<f64>> = rhs.iter().map(|b| b.to_vec()).collect();

    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, work.at(r, col).abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot_abs <= tol {
            return Err(SingularSystem {
                pivot: pivot_abs,
                tol,
                col,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = work.at(col, j);
                *work.at_mut(col, j) = work.at(pivot_row, j);
                *work.at_mut(pivot_row, j) = tmp;
            }
            for b in bs.iter_mut() {
                b.swap(col, pivot_row);
            }
        }
        let pivot = work.at(col, col);
        for r in col + 1..n {
            let factor = work.at(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            *work.at_mut(r, col) = 0.0;
            for j in col + 1..n {
                let upd = work.at(col, j) * factor;
                *work.at_mut(r, j) -= upd;
            }
            for b in bs.iter_mut() {
                let upd = b[col] * factor;
                b[r] -= upd;
            }
        }
    }

    for b in bs.iter_mut() {
        for col in (0..n).rev() {
            let tail: f64 = work.row(col)[col + 1..]
                .iter()
                .zip(&b[col + 1..])
                .map(|(w, x)| w * x)
                .sum();
            b[col] = (b[col] - tail) / work.at(col, col);
        }
    }
    Ok(bs)
}
