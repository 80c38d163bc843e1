//! Simultaneous variable selection for several response variables.
//!
//! Stacking `p` response vectors on top of each other and replicating the
//! design block-diagonally turns the multi-response problem into an
//! ordinary group-sparse one: collecting regressor `k`'s coefficient for
//! every response into one group makes the penalty `sum_k max_j |B[k][j]|`,
//! so one path solve selects regressors for all responses at once.
//!
//! Layout conventions are fixed so documents are reproducible: responses
//! and the coefficient matrix are flattened column-major, i.e. response
//! block `j` occupies rows `j*n..(j+1)*n` and columns `j*m..(j+1)*m`.

use thiserror::Error;

use crate::mat::Mat;
use crate::problem::{ProblemError, QuantileProblem};

/// Index bookkeeping for a stacked problem with `n` observations, `m`
/// regressors, and `p` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackedLayout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl StackedLayout {
    /// Stacked column index of regressor `k`'s coefficient for response `j`.
    pub fn column(&self, k: usize, j: usize) -> usize {
        j * self.m + k
    }

    /// Stacked row index of observation `i` under response `j`.
    pub fn row(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn stacked_rows(&self) -> usize {
        self.n * self.p
    }

    pub fn stacked_cols(&self) -> usize {
        self.m * self.p
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StackError {
    #[error("Y has {y_rows} rows but X has {x_rows}")]
    RowMismatch { y_rows: usize, x_rows: usize },
    #[error("at least one response column is required")]
    NoResponses,
    #[error("coefficient vector length {got} does not match layout ({expected})")]
    BetaLength { expected: usize, got: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Builds the stacked problem: response blocks concatenated column-major,
/// design replicated block-diagonally, and one size-`p` group per regressor.
pub fn stack_problem(
    y: &Mat,
    x: &Mat,
    tau: f64,
) -> Result<(QuantileProblem, StackedLayout), StackError> {
    if y.nrows() != x.nrows() {
        return Err(StackError::RowMismatch { y_rows: y.nrows(), x_rows: x.nrows() });
    }
    if y.ncols() == 0 {
        return Err(StackError::NoResponses);
    }
    let layout = StackedLayout { n: x.nrows(), m: x.ncols(), p: y.ncols() };

    let mut response = Vec::with_capacity(layout.stacked_rows());
    for j in 0..layout.p {
        for i in 0..layout.n {
            response.push(y.at(i, j));
        }
    }

    let mut design = Mat::zeros(layout.stacked_rows(), layout.stacked_cols());
    for j in 0..layout.p {
        for i in 0..layout.n {
            for k in 0..layout.m {
                *design.at_mut(layout.row(i, j), layout.column(k, j)) = x.at(i, k);
            }
        }
    }

    let groups: Vec<Vec<usize>> = (0..layout.m)
        .map(|k| (0..layout.p).map(|j| layout.column(k, j)).collect())
        .collect();

    let problem = QuantileProblem::new(design, response, tau, groups)?;
    Ok((problem, layout))
}

/// Reshapes a stacked coefficient vector into the `m x p` matrix `B` with
/// `B[k][j]` the coefficient of regressor `k` for response `j`.
pub fn unstack_coefficients(beta: &[f64], layout: &StackedLayout) -> Result<Mat, StackError> {
    if beta.len() != layout.stacked_cols() {
        return Err(StackError::BetaLength { expected: layout.stacked_cols(), got: beta.len() });
    }
    let mut b = Mat::zeros(layout.m, layout.p);
    for k in 0..layout.m {
        for j in 0..layout.p {
            *b.at_mut(k, j) = beta[layout.column(k, j)];
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{mixed_norm, quantile_loss, total_loss};
    use rand_chacha::rand_core::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
        let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + unit * (hi - lo)
    }

    #[test]
    fn shape_contract() {
        let x = Mat::from_rows(&[vec![1.0, 0.5], vec![0.25, 1.0]]);
        let y = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let (problem, layout) = stack_problem(&y, &x, 0.5).unwrap();
        assert_eq!(problem.design().nrows(), 4);
        assert_eq!(problem.design().ncols(), 4);
        assert_eq!(problem.n_groups(), 2);
        assert_eq!(problem.groups()[0], vec![0, 2]);
        assert_eq!(layout.column(1, 1), 3);
        // Off-diagonal blocks are zero.
        assert_eq!(problem.design().at(0, 2), 0.0);
        assert_eq!(problem.design().at(2, 0), 0.0);
        assert_eq!(problem.design().at(2, 2), 1.0);
    }

    #[test]
    fn single_response_reduces_to_singleton_groups() {
        let x = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let y = Mat::from_columns(&[vec![1.0, -1.0]]);
        let (problem, layout) = stack_problem(&y, &x, 0.3).unwrap();
        assert_eq!(layout.p, 1);
        assert_eq!(problem.design(), &x);
        assert_eq!(problem.groups(), &[vec![0], vec![1]]);
    }

    #[test]
    fn stack_then_unstack_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let layout = StackedLayout { n: 4, m: 3, p: 2 };
        let beta: Vec<f64> = (0..layout.stacked_cols()).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let b = unstack_coefficients(&beta, &layout).unwrap();
        for k in 0..3 {
            for j in 0..2 {
                assert_eq!(b.at(k, j), beta[layout.column(k, j)]);
            }
        }
    }

    #[test]
    fn stacked_loss_and_penalty_match_direct_sums() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (n, m, p) = (5, 3, 3);
            let x = Mat::from_rows(
                &(0..n).map(|_| (0..m).map(|_| uniform(&mut rng, -2.0, 2.0)).collect()).collect::<Vec<_>>(),
            );
            let y = Mat::from_rows(
                &(0..n).map(|_| (0..p).map(|_| uniform(&mut rng, -2.0, 2.0)).collect()).collect::<Vec<_>>(),
            );
            let tau = uniform(&mut rng, 0.1, 0.9);
            let (problem, layout) = stack_problem(&y, &x, tau).unwrap();
            let beta: Vec<f64> =
                (0..layout.stacked_cols()).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
            let b = unstack_coefficients(&beta, &layout).unwrap();

            // Double sum of the per-response losses.
            let mut direct_loss = 0.0;
            for i in 0..n {
                for j in 0..p {
                    let fitted: f64 = (0..m).map(|k| x.at(i, k) * b.at(k, j)).sum();
                    direct_loss += quantile_loss(y.at(i, j) - fitted, tau);
                }
            }
            let stacked_loss = total_loss(&beta, &problem);
            assert!((direct_loss - stacked_loss).abs() <= 1e-12 * direct_loss.abs().max(1.0));

            // Row-wise infinity norms give the stacked penalty.
            let direct_penalty: f64 = (0..m)
                .map(|k| (0..p).map(|j| b.at(k, j).abs()).fold(0.0, f64::max))
                .sum();
            let stacked_penalty = mixed_norm(&beta, problem.groups());
            assert!((direct_penalty - stacked_penalty).abs() <= 1e-12);
        }
    }
}
