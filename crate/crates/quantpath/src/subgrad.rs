//! Subdifferentials of the check loss and the mixed norm, and a verifier
//! that certifies a `(beta, lambda, u, w)` tuple against the full
//! optimality system
//!
//! ```text
//!   -X^T w + lambda u = 0
//!   w_i in d rho_tau(r_i)          r = y - X beta
//!   u   in d ||beta||_{1,inf}
//! ```
//!
//! All membership checks use absolute tolerances: the subgradient sets
//! switch shape exactly at zero, where relative tolerances misbehave.

use thiserror::Error;

use crate::problem::{residuals, QuantileProblem};

/// A closed interval `[lo, hi]`; singletons are degenerate intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval bounds out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn singleton(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    /// Distance from `x` to the interval (zero inside).
    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    /// Nearest point of the interval to `x`.
    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SubgradError {
    #[error("length mismatch: {context} expected {expected}, got {got}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
}

/// Subdifferential of the check loss at residual `r_i`:
/// `{2 tau}` for positive residuals, `{-2(1-tau)}` for negative ones, and
/// the full interval in between at zero.
pub fn rho_subdifferential(r_i: f64, tau: f64) -> Interval {
    debug_assert!(tau > 0.0 && tau < 1.0);
    if r_i > 0.0 {
        Interval::singleton(2.0 * tau)
    } else if r_i < 0.0 {
        Interval::singleton(-2.0 * (1.0 - tau))
    } else {
        Interval::new(-2.0 * (1.0 - tau), 2.0 * tau)
    }
}

/// Checks `u_g in d ||beta_g||_inf` within an absolute tolerance.
///
/// For the all-zero group the subdifferential is the unit l1 ball. For a
/// nonzero group it is the face of that ball spanned by the signed maximal
/// coordinates: `u_j = 0` on non-maximal coordinates, `u_j * sign(beta_j)
/// >= 0` on maximal ones, and `||u_g||_1 = 1`.
pub fn group_norm_subgradient_check(
    beta_g: &[f64],
    u_g: &[f64],
    tol: f64,
) -> Result<bool, SubgradError> {
    if beta_g.len() != u_g.len() {
        return Err(SubgradError::LengthMismatch {
            context: "group_norm_subgradient_check",
            expected: beta_g.len(),
            got: u_g.len(),
        });
    }
    Ok(group_membership_violation(beta_g, u_g, tol) <= tol)
}

/// Largest violation of the group membership conditions; zero when the
/// certificate is exact. Classification of maximal coordinates uses the
/// same tolerance.
pub(crate) fn group_membership_violation(beta_g: &[f64], u_g: &[f64], tol: f64) -> f64 {
    let l1: f64 = u_g.iter().map(|u| u.abs()).sum();
    let mut worst = (l1 - 1.0).max(0.0);

    let max_abs = beta_g.iter().map(|b| b.abs()).fold(0.0, f64::max);
    if max_abs > tol {
        worst = worst.max(1.0 - l1);
        for (&b, &u) in beta_g.iter().zip(u_g) {
            if b.abs() >= max_abs - tol {
                // Maximal coordinate: subgradient mass must carry beta's sign.
                worst = worst.max(-(u * b.signum()));
            } else {
                worst = worst.max(u.abs());
            }
        }
    }
    worst.max(0.0)
}

/// Outcome of verifying one `(beta, lambda, u, w)` certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub ok: bool,
    /// Infinity norm of `-X^T w + lambda u`.
    pub max_stationarity_violation: f64,
    /// Observations whose `w_i` lies outside the loss subdifferential,
    /// with the distance to it.
    pub w_violations: Vec<(usize, f64)>,
    /// Groups whose `u` block violates the penalty subdifferential,
    /// with the worst membership violation.
    pub u_violations: Vec<(usize, f64)>,
    /// Observations where an interior `w_i` demands a zero residual that
    /// does not hold, with `|r_i|`.
    pub consistency_violations: Vec<(usize, f64)>,
}

impl KktReport {
    /// Worst violation across all checks.
    pub fn worst(&self) -> f64 {
        let lists = self
            .w_violations
            .iter()
            .chain(&self.u_violations)
            .chain(&self.consistency_violations)
            .map(|&(_, v)| v)
            .fold(0.0, f64::max);
        lists.max(self.max_stationarity_violation)
    }
}

/// Verifies all four lines of the optimality system at a fixed `lambda`.
///
/// The converse reading of the loss subdifferential is enforced as a
/// consistency condition: a `w_i` interior to its bounds by more than `tol`
/// forces `|r_i| <= tol`, while boundary values impose only the one-sided
/// sign condition already covered by the membership check.
pub fn kkt_verify(
    beta: &[f64],
    lambda: f64,
    u: &[f64],
    w: &[f64],
    problem: &QuantileProblem,
    tol: f64,
) -> Result<KktReport, SubgradError> {
    let (n, m) = (problem.n_obs(), problem.n_cols());
    if beta.len() != m {
        return Err(SubgradError::LengthMismatch { context: "beta", expected: m, got: beta.len() });
    }
    if u.len() != m {
        return Err(SubgradError::LengthMismatch { context: "u", expected: m, got: u.len() });
    }
    if w.len() != n {
        return Err(SubgradError::LengthMismatch { context: "w", expected: n, got: w.len() });
    }
    if lambda < 0.0 {
        return Err(SubgradError::NegativeLambda(lambda));
    }

    let xtw = problem.design().t_matvec(w);
    let max_stationarity_violation = xtw
        .iter()
        .zip(u)
        .map(|(xw, uj)| (-xw + lambda * uj).abs())
        .fold(0.0, f64::max);

    let r = residuals(beta, problem);
    let tau = problem.tau();
    let (w_lo, w_hi) = (problem.w_lower(), problem.w_upper());

    let mut w_violations = Vec::new();
    let mut consistency_violations = Vec::new();
    for i in 0..n {
        // Classify the residual with the same tolerance used for membership.
        let set = if r[i] > tol {
            Interval::singleton(w_hi)
        } else if r[i] < -tol {
            Interval::singleton(w_lo)
        } else {
            Interval::new(w_lo, w_hi)
        };
        let dist = set.distance(w[i]);
        if dist > tol {
            w_violations.push((i, dist));
        }
        let interior = w[i] > w_lo + tol && w[i] < w_hi - tol;
        if interior && r[i].abs() > tol {
            consistency_violations.push((i, r[i].abs()));
        }
        let _ = tau;
    }

    let mut u_violations = Vec::new();
    for (k, group) in problem.groups().iter().enumerate() {
        let beta_g: Vec<f64> = group.iter().map(|&j| beta[j]).collect();
        let u_g: Vec<f64> = group.iter().map(|&j| u[j]).collect();
        let violation = group_membership_violation(&beta_g, &u_g, tol);
        if violation > tol {
            u_violations.push((k, violation));
        }
    }

    let ok = max_stationarity_violation <= tol
        && w_violations.is_empty()
        && u_violations.is_empty()
        && consistency_violations.is_empty();
    Ok(KktReport {
        ok,
        max_stationarity_violation,
        w_violations,
        u_violations,
        consistency_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::demo_problem;
    use proptest::prelude::*;

    #[test]
    fn rho_subdifferential_examples() {
        assert_eq!(rho_subdifferential(8.0, 0.5), Interval::singleton(1.0));
        assert_eq!(rho_subdifferential(0.0, 0.5), Interval::new(-1.0, 1.0));
        let i = rho_subdifferential(-3.0, 0.9);
        assert!((i.lo + 0.2).abs() < 1e-15 && (i.hi + 0.2).abs() < 1e-15);
    }

    #[test]
    fn group_check_examples() {
        // Active group with both coordinates maximal.
        assert!(group_norm_subgradient_check(&[1.0, 1.0], &[11.0 / 17.0, 6.0 / 17.0], 1e-9).unwrap());
        // Inactive group: any point of the unit l1 ball works.
        assert!(group_norm_subgradient_check(&[0.0], &[-12.0 / 17.0], 1e-9).unwrap());
        // Mass on a non-maximal coordinate is rejected.
        assert!(!group_norm_subgradient_check(&[27.0 / 22.0, 19.0 / 22.0], &[1.0, 0.1], 1e-9).unwrap());
        // Sign flip on a maximal coordinate is rejected.
        assert!(!group_norm_subgradient_check(&[1.0, -1.0], &[0.5, 0.5], 1e-9).unwrap());
        assert!(group_norm_subgradient_check(&[0.0], &[0.5, 0.5], 1e-9).is_err());
    }

    #[test]
    fn kkt_accepts_known_certificates() {
        let p = demo_problem();
        // Interior of the third path segment.
        let rep = kkt_verify(
            &[-1.0, 0.5, 0.5],
            20.0 / 3.0,
            &[-1.0, 1.0, 0.0],
            &[-1.0 / 6.0, 5.0 / 6.0, -1.0],
            &p,
            1e-8,
        )
        .unwrap();
        assert!(rep.ok, "{rep:?}");

        // beta = 0 stays optimal above the activation threshold.
        let rep = kkt_verify(
            &[0.0; 3],
            20.0,
            &[-12.0 / 20.0, 11.0 / 20.0, 6.0 / 20.0],
            &[1.0, 1.0, -1.0],
            &p,
            1e-8,
        )
        .unwrap();
        assert!(rep.ok, "{rep:?}");
    }

    #[test]
    fn kkt_rejects_perturbed_certificate() {
        let p = demo_problem();
        let rep = kkt_verify(
            &[-1.0, 0.5, 0.5],
            20.0 / 3.0,
            &[-1.0, 1.0, 0.5],
            &[-1.0 / 6.0, 5.0 / 6.0, -1.0],
            &p,
            1e-8,
        )
        .unwrap();
        assert!(!rep.ok);
        assert!(rep.max_stationarity_violation > 1e-8);
        assert_eq!(rep.u_violations.len(), 1);
        assert_eq!(rep.u_violations[0].0, 1);
    }

    #[test]
    fn kkt_flags_interior_w_with_nonzero_residual() {
        let p = demo_problem();
        // w_1 interior but r_1 = 8 != 0.
        let rep = kkt_verify(&[0.0; 3], 20.0, &[0.0; 3], &[0.0, 1.0, -1.0], &p, 1e-8).unwrap();
        assert!(!rep.ok);
        assert!(rep.consistency_violations.iter().any(|&(i, _)| i == 0));
    }

    proptest! {
        /// Projecting any candidate onto the subdifferential makes the
        /// membership check pass (and re-projecting is a fixed point).
        #[test]
        fn projection_is_idempotent(
            r in -10.0f64..10.0,
            tau in 0.05f64..0.95,
            candidate in -5.0f64..5.0,
        ) {
            let set = rho_subdifferential(r, tau);
            let w = set.project(candidate);
            prop_assert_eq!(set.distance(w), 0.0);
            prop_assert_eq!(set.project(w), w);
        }
    }
}
