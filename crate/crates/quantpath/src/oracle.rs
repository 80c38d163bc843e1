//! Independent exact minimizer of the penalized objective
//! `F(beta) = total_loss(beta) + lambda * mixed_norm(beta)` at a fixed
//! `lambda`, for desk-scale instances only.
//!
//! `F` is convex piecewise linear, so minimizing it is a linear program:
//! split each residual into positive and negative parts priced at `2 tau`
//! and `2 (1 - tau)`, bound every group's coefficients by a magnitude
//! variable priced at `lambda`, and minimize. The module solves that LP
//! with a self-contained dense tableau simplex under Bland's rule, which
//! cannot cycle and terminates at an exact vertex. Coordinate descent with
//! kink enumeration was tried first and rejected: single-coordinate moves
//! stall on this objective, because leaving a residual kink or a shared
//! group magnitude requires several coordinates to move together.
//!
//! This module deliberately shares no machinery with the path solver; it
//! is the equivalence check for it.

use thiserror::Error;

use crate::mat::Mat;
use crate::problem::{mixed_norm, total_loss, QuantileProblem};

const MAX_N: usize = 12;
const MAX_M: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Simplex pivot budget.
    pub max_pivots: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_pivots: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub beta: Vec<f64>,
    /// `F(beta)`, evaluated directly on the returned point.
    pub objective: f64,
    /// Simplex pivots performed.
    pub iterations: usize,
    /// False only if the pivot budget ran out.
    pub converged: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for the oracle: n = {n} (max {MAX_N}), m = {m} (max {MAX_M})")]
    TooLarge { n: usize, m: usize },
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
}

fn objective(beta: &[f64], problem: &QuantileProblem, lambda: f64) -> f64 {
    total_loss(beta, problem) + lambda * mixed_norm(beta, problem.groups())
}

/// Minimizes `F` exactly via the linear-programming form.
pub fn brute_force_min(
    problem: &QuantileProblem,
    lambda: f64,
    opts: &OracleOptions,
) -> Result<OracleResult, OracleError> {
    let (n, m) = (problem.n_obs(), problem.n_cols());
    if n > MAX_N || m > MAX_M {
        return Err(OracleError::TooLarge { n, m });
    }
    if lambda < 0.0 {
        return Err(OracleError::NegativeLambda(lambda));
    }
    let g = problem.n_groups();
    let x = problem.design();
    let y = problem.response();

    // Columns: p_i, q_i (residual split), bp_j, bm_j (coefficient split),
    // t_k (group magnitudes), sp_j, sm_j (slacks of t_k >= +-beta_j).
    let cols = 2 * n + 2 * m + g + 2 * m;
    let rows = n + 2 * m;
    let p0 = 0;
    let q0 = n;
    let bp0 = 2 * n;
    let bm0 = 2 * n + m;
    let t0 = 2 * n + 2 * m;
    let sp0 = t0 + g;
    let sm0 = sp0 + m;

    let mut a = Mat::zeros(rows, cols);
    let mut b = vec![0.0; rows];
    let mut cost = vec![0.0; cols];
    for i in 0..n {
        cost[p0 + i] = problem.w_upper(); // 2 tau
        cost[q0 + i] = -problem.w_lower(); // 2 (1 - tau)
    }
    for k in 0..g {
        cost[t0 + k] = lambda;
    }

    // Residual rows: sum_j X_ij (bp_j - bm_j) + p_i - q_i = y_i, with the
    // sign flipped when y_i < 0 so that p_i or q_i starts basic at |y_i|.
    let mut basis = Vec::with_capacity(rows);
    for i in 0..n {
        let flip = if y[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..m {
            *a.at_mut(i, bp0 + j) = flip * x.at(i, j);
            *a.at_mut(i, bm0 + j) = -flip * x.at(i, j);
        }
        *a.at_mut(i, p0 + i) = flip;
        *a.at_mut(i, q0 + i) = -flip;
        b[i] = flip * y[i];
        basis.push(if y[i] < 0.0 { q0 + i } else { p0 + i });
    }
    // Magnitude rows: beta_j + sp_j - t_k = 0 and -beta_j + sm_j - t_k = 0.
    for j in 0..m {
        let k = problem.group_of(j);
        let rp = n + j;
        *a.at_mut(rp, bp0 + j) = 1.0;
        *a.at_mut(rp, bm0 + j) = -1.0;
        *a.at_mut(rp, sp0 + j) = 1.0;
        *a.at_mut(rp, t0 + k) = -1.0;
        basis.push(sp0 + j);

        let rm = n + m + j;
        *a.at_mut(rm, bp0 + j) = -1.0;
        *a.at_mut(rm, bm0 + j) = 1.0;
        *a.at_mut(rm, sm0 + j) = 1.0;
        *a.at_mut(rm, t0 + k) = -1.0;
        basis.push(sm0 + j);
    }

    let outcome = simplex(&mut a, &mut b, &cost, &mut basis, opts.max_pivots);

    let mut beta = vec![0.0; m];
    for (r, &col) in basis.iter().enumerate() {
        if (bp0..bp0 + m).contains(&col) {
            beta[col - bp0] += b[r];
        } else if (bm0..bm0 + m).contains(&col) {
            beta[col - bm0] -= b[r];
        }
    }
    let objective = objective(&beta, problem, lambda);
    Ok(OracleResult {
        beta,
        objective,
        iterations: outcome.pivots,
        converged: outcome.optimal,
    })
}

struct SimplexOutcome {
    pivots: usize,
    optimal: bool,
}

const PIVOT_EPS: f64 = 1e-9;

/// Dense tableau simplex with Bland's anti-cycling rule. The initial basis
/// must be the identity on its columns with `b >= 0`.
fn simplex(
    a: &mut Mat,
    b: &mut [f64],
    cost: &[f64],
    basis: &mut [usize],
    max_pivots: usize,
) -> SimplexOutcome {
    let rows = a.nrows();
    let cols = a.ncols();

    // Reduced costs for the starting basis.
    let mut d = cost.to_vec();
    for (r, &col) in basis.iter().enumerate() {
        let cb = cost[col];
        if cb == 0.0 {
            continue;
        }
        for (dj, &arj) in d.iter_mut().zip(a.row(r)) {
            *dj -= cb * arj;
        }
    }

    for pivots in 0..max_pivots {
        // Bland: first column with a negative reduced cost.
        let Some(enter) = (0..cols).find(|&j| d[j] < -PIVOT_EPS) else {
            return SimplexOutcome { pivots, optimal: true };
        };

        // Ratio test; ties broken by smallest basis index (Bland).
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let coeff = a.at(r, enter);
            if coeff <= PIVOT_EPS {
                continue;
            }
            let ratio = b[r].max(0.0) / coeff;
            match leave {
                None => leave = Some((r, ratio)),
                Some((lr, lratio)) => {
                    if ratio < lratio - PIVOT_EPS
                        || (ratio <= lratio + PIVOT_EPS && basis[r] < basis[lr])
                    {
                        leave = Some((r, ratio));
                    }
                }
            }
        }
        // The objective is bounded below by zero, so descent is never
        // unbounded; a missing pivot row means numerical trouble.
        let Some((lr, _)) = leave else {
            return SimplexOutcome { pivots, optimal: false };
        };

        let pivot = a.at(lr, enter);
        for j in 0..cols {
            *a.at_mut(lr, j) /= pivot;
        }
        b[lr] /= pivot;
        for r in 0..rows {
            if r == lr {
                continue;
            }
            let factor = a.at(r, enter);
            if factor == 0.0 {
                continue;
            }
            for j in 0..cols {
                let upd = a.at(lr, j) * factor;
                *a.at_mut(r, j) -= upd;
            }
            b[r] -= b[lr] * factor;
        }
        let factor = d[enter];
        if factor != 0.0 {
            for (dj, &alr) in d.iter_mut().zip(a.row(lr)) {
                *dj -= alr * factor;
            }
        }
        basis[lr] = enter;
    }
    SimplexOutcome { pivots: max_pivots, optimal: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::testutil::demo_problem;

    #[test]
    fn large_lambda_keeps_zero() {
        let p = demo_problem();
        let res = brute_force_min(&p, 20.0, &OracleOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.objective - 26.0).abs() < 1e-9, "objective {}", res.objective);
        assert!(res.beta.iter().all(|b| b.abs() < 1e-9));
    }

    #[test]
    fn mid_path_lambda_matches_known_objective() {
        let p = demo_problem();
        let res = brute_force_min(&p, 5.0, &OracleOptions::default()).unwrap();
        // Known minimizer (-1, 1/2, 1/2): loss 11/2 plus 5 * 3/2.
        assert!((res.objective - 13.0).abs() < 1e-6, "objective {}", res.objective);
    }

    #[test]
    fn zero_lambda_with_invertible_design_fits_exactly() {
        let x = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let p = QuantileProblem::with_singleton_groups(x, vec![3.0, 4.0], 0.5).unwrap();
        let res = brute_force_min(&p, 0.0, &OracleOptions::default()).unwrap();
        assert!(res.objective.abs() < 1e-9, "objective {}", res.objective);
    }

    #[test]
    fn objective_invariant_under_column_permutation() {
        let p = demo_problem();
        // Same problem with columns reversed (and groups relabeled).
        let xr = Mat::from_rows(&[
            vec![5.0, 3.0, -4.0],
            vec![1.0, 5.0, -4.0],
            vec![0.0, -3.0, 4.0],
        ]);
        let pr = QuantileProblem::new(xr, vec![8.0, 7.0, -11.0], 0.5, vec![vec![2], vec![0, 1]])
            .unwrap();
        for lambda in [0.5, 3.0, 8.0] {
            let a = brute_force_min(&p, lambda, &OracleOptions::default()).unwrap();
            let b = brute_force_min(&pr, lambda, &OracleOptions::default()).unwrap();
            assert!(
                (a.objective - b.objective).abs() <= 1e-8 * a.objective.abs().max(1.0),
                "lambda {lambda}: {} vs {}",
                a.objective,
                b.objective
            );
        }
    }

    #[test]
    fn rejects_oversized_instances() {
        let x = Mat::from_rows(&(0..13).map(|i| vec![i as f64 + 1.0]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..13).map(|i| i as f64).collect();
        let p = QuantileProblem::with_singleton_groups(x, y, 0.5).unwrap();
        assert!(matches!(
            brute_force_min(&p, 1.0, &OracleOptions::default()),
            Err(OracleError::TooLarge { .. })
        ));
    }
}
