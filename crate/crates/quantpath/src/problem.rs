//! Problem data and evaluation of the loss, residuals, and penalty norm.

use thiserror::Error;

use crate::mat::Mat;

/// A group-sparse quantile regression problem: design matrix `X` (n rows,
/// m columns), response `y`, quantile level `tau`, and a partition of the
/// column indices `0..m` into disjoint non-empty groups.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileProblem {
    x: Mat,
    y: Vec<f64>,
    tau: f64,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProblemError {
    #[error("tau must lie strictly between 0 and 1, got {0}")]
    BadTau(f64),
    #[error("response length {got} does not match design rows {expected}")]
    ResponseLength { expected: usize, got: usize },
    #[error("design matrix must have at least one row and one column")]
    EmptyDesign,
    #[error("invalid group structure: {0}")]
    BadGroups(String),
}

impl QuantileProblem {
    /// Validates and constructs a problem. Group indices are zero-based and
    /// must partition `0..m` into disjoint non-empty sets.
    pub fn new(x: Mat, y: Vec<f64>, tau: f64, groups: Vec<Vec<usize>>) -> Result<Self, ProblemError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(ProblemError::BadTau(tau));
        }
        let (n, m) = (x.nrows(), x.ncols());
        if n == 0 || m == 0 {
            return Err(ProblemError::EmptyDesign);
        }
        if y.len() != n {
            return Err(ProblemError::ResponseLength { expected: n, got: y.len() });
        }
        let mut group_of = vec![usize::MAX; m];
        for (k, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(ProblemError::BadGroups(format!("group {k} is empty")));
            }
            for &j in group {
                if j >= m {
                    return Err(ProblemError::BadGroups(format!(
                        "group {k} references column {j}, but m = {m}"
                    )));
                }
                if group_of[j] != usize::MAX {
                    return Err(ProblemError::BadGroups(format!(
                        "column {j} appears in groups {} and {k}",
                        group_of[j]
                    )));
                }
                group_of[j] = k;
            }
        }
        if let Some(j) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(ProblemError::BadGroups(format!("column {j} belongs to no group")));
        }
        let mut groups = groups;
        for g in groups.iter_mut() {
            g.sort_unstable();
        }
        Ok(QuantileProblem { x, y, tau, groups, group_of })
    }

    /// Every column in its own group (plain l1-penalized quantile regression).
    pub fn with_singleton_groups(x: Mat, y: Vec<f64>, tau: f64) -> Result<Self, ProblemError> {
        let m = x.ncols();
        QuantileProblem::new(x, y, tau, (0..m).map(|j| vec![j]).collect())
    }

    pub fn design(&self) -> &Mat {
        &self.x
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Group index of column `j`.
    pub fn group_of(&self, j: usize) -> usize {
        self.group_of[j]
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Upper bound `2*tau` of the loss subgradient.
    pub fn w_upper(&self) -> f64 {
        2.0 * self.tau
    }

    /// Lower bound `-2*(1 - tau)` of the loss subgradient.
    pub fn w_lower(&self) -> f64 {
        -2.0 * (1.0 - self.tau)
    }
}

/// The check loss: `2*tau*t` for `t >= 0`, `-2*(1-tau)*t` for `t <= 0`.
/// Equals `|t|` at `tau = 1/2`.
#[inline]
pub fn quantile_loss(t: f64, tau: f64) -> f64 {
    debug_assert!(tau > 0.0 && tau < 1.0);
    if t >= 0.0 {
        2.0 * tau * t
    } else {
        -2.0 * (1.0 - tau) * t
    }
}

/// Total check loss of `beta` on the problem.
pub fn total_loss(beta: &[f64], problem: &QuantileProblem) -> f64 {
    residuals(beta, problem)
        .iter()
        .map(|&r| quantile_loss(r, problem.tau))
        .sum()
}

/// Mixed l1/l-infinity norm: sum over groups of the largest absolute
/// coefficient in the group.
pub fn mixed_norm(beta: &[f64], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|g| g.iter().map(|&j| beta[j].abs()).fold(0.0, f64::max))
        .sum()
}

/// Residual vector `y - X beta`.
pub fn residuals(beta: &[f64], problem: &QuantileProblem) -> Vec<f64> {
    assert_eq!(beta.len(), problem.n_cols(), "beta length mismatch");
    let fitted = problem.x.matvec(beta);
    problem.y.iter().zip(fitted).map(|(y, f)| y - f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::demo_problem;
    use proptest::prelude::*;

    #[test]
    fn quantile_loss_examples() {
        assert_eq!(quantile_loss(-11.0, 0.5), 11.0);
        assert!((quantile_loss(5.0, 0.1) - 1.0).abs() < 1e-15);
        assert!((quantile_loss(-2.0, 0.9) - 0.4).abs() < 1e-15);
        assert_eq!(quantile_loss(0.0, 0.3), 0.0);
    }

    #[test]
    fn total_loss_examples() {
        let p = demo_problem();
        assert!((total_loss(&[0.0, 0.0, 0.0], &p) - 26.0).abs() < 1e-12);
        let b = [-161.0 / 40.0, -17.0 / 10.0, -3.0 / 5.0];
        assert!(total_loss(&b, &p).abs() < 1e-12);
        assert!((total_loss(&[-1.0, 0.5, 0.5], &p) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn mixed_norm_examples() {
        let groups = vec![vec![0], vec![1, 2]];
        assert_eq!(mixed_norm(&[0.0, 0.0, 0.0], &groups), 0.0);
        assert!((mixed_norm(&[-1.0, 0.5, 0.5], &groups) - 1.5).abs() < 1e-15);
        let b = [-161.0 / 40.0, -17.0 / 10.0, -3.0 / 5.0];
        assert!((mixed_norm(&b, &groups) - 229.0 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        let p = demo_problem();
        let r = residuals(&[0.0, 1.0, 1.0], &p);
        assert!(r.iter().zip(&[0.0, 1.0, -8.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(residuals(&[0.0; 3], &p), vec![8.0, 7.0, -11.0]);
        let r = residuals(&[0.0, 27.0 / 22.0, 19.0 / 22.0], &p);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        assert!((r[2] + 161.0 / 22.0).abs() < 1e-12);
    }

    #[test]
    fn group_validation() {
        let x = Mat::from_rows(&[vec![1.0, 2.0]]);
        assert!(QuantileProblem::new(x.clone(), vec![1.0], 0.5, vec![vec![0]]).is_err());
        assert!(QuantileProblem::new(x.clone(), vec![1.0], 0.5, vec![vec![0], vec![0, 1]]).is_err());
        assert!(QuantileProblem::new(x.clone(), vec![1.0], 1.5, vec![vec![0], vec![1]]).is_err());
        assert!(QuantileProblem::new(x, vec![1.0], 0.5, vec![vec![0], vec![1]]).is_ok());
    }

    fn partition_strategy(m: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
        // Assign each column a group label in 0..m, then compact the labels.
        proptest::collection::vec(0..m, m).prop_map(move |labels| {
            let mut groups: Vec<Vec<usize>> = Vec::new();
            let mut seen: Vec<(usize, usize)> = Vec::new();
            for (j, &l) in labels.iter().enumerate() {
                match seen.iter().find(|(lab, _)| *lab == l) {
                    Some(&(_, g)) => groups[g].push(j),
                    None => {
                        seen.push((l, groups.len()));
                        groups.push(vec![j]);
                    }
                }
            }
            groups
        })
    }

    proptest! {
        #[test]
        fn loss_symmetry(t in -100.0f64..100.0, tau in 0.01f64..0.99) {
            let lhs = quantile_loss(t, tau);
            let rhs = quantile_loss(-t, 1.0 - tau);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }

        #[test]
        fn mixed_norm_is_a_norm(
            (a, b, groups) in (1usize..7).prop_flat_map(|m| (
                proptest::collection::vec(-10.0f64..10.0, m),
                proptest::collection::vec(-10.0f64..10.0, m),
                partition_strategy(m),
            )),
            c in -5.0f64..5.0,
        ) {
            let na = mixed_norm(&a, &groups);
            let nb = mixed_norm(&b, &groups);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert!(mixed_norm(&sum, &groups) <= na + nb + 1e-9);
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            prop_assert!((mixed_norm(&scaled, &groups) - c.abs() * na).abs() <= 1e-9 * (1.0 + na));
            prop_assert!(na >= 0.0);
            if a.iter().any(|&x| x != 0.0) {
                prop_assert!(na > 0.0);
            }
        }
    }
}
