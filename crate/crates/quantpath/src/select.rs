//! Reading solutions off a computed path: interpolation at arbitrary `R`
//! or `lambda`, BIC model selection, and the loss/penalty trade-off curve.

use thiserror::Error;

use crate::path::SolutionPath;
use crate::problem::{quantile_loss, total_loss};

/// Residuals this close to zero count as interpolated observations.
pub const ZERO_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SelectError {
    #[error("R = {r} outside the path range [0, {max_r}]")]
    RadiusOutOfRange { r: f64, max_r: f64 },
    #[error("lambda = {lambda} below the computed path range (truncated path)")]
    LambdaNotCovered { lambda: f64 },
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("the path has no nodes")]
    EmptyPath,
    #[error("no node has a finite BIC value")]
    NoFiniteBic,
}

/// Minimizer at a given norm budget `R`, by linear interpolation between the
/// two bracketing nodes. Node values are returned exactly.
pub fn interpolate_at_r(path: &SolutionPath, r: f64) -> Result<Vec<f64>, SelectError> {
    let nodes = path.nodes();
    if nodes.is_empty() {
        return Err(SelectError::EmptyPath);
    }
    let max_r = path.last_radius();
    if !(0.0..=max_r).contains(&r) {
        return Err(SelectError::RadiusOutOfRange { r, max_r });
    }
    if let Some(node) = nodes.iter().find(|n| n.radius == r) {
        return Ok(node.beta.clone());
    }
    let hi = nodes.iter().position(|n| n.radius > r).expect("r below max");
    let (a, b) = (&nodes[hi - 1], &nodes[hi]);
    let t = (r - a.radius) / (b.radius - a.radius);
    Ok(a.beta
        .iter()
        .zip(&b.beta)
        .map(|(x, y)| x + t * (y - x))
        .collect())
}

/// Minimizer at a penalty level, plus a uniqueness flag.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolution {
    pub beta: Vec<f64>,
    /// False exactly at breakpoint lambdas, where a whole segment of betas
    /// minimizes; the largest-R representative is returned then.
    pub unique: bool,
}

/// Minimizer at a given `lambda`. The minimizer is constant on each open
/// lambda interval; at a lambda shared by two nodes the larger-R node is
/// returned with `unique = false`. Any `lambda` above the activation
/// threshold yields the zero solution.
pub fn interpolate_at_lambda(path: &SolutionPath, lambda: f64) -> Result<LambdaSolution, SelectError> {
    if lambda < 0.0 {
        return Err(SelectError::NegativeLambda(lambda));
    }
    let nodes = path.nodes();
    if nodes.is_empty() {
        return Err(SelectError::EmptyPath);
    }
    let matches: Vec<&crate::path::PathNode> = nodes
        .iter()
        .filter(|n| lambda >= n.lambda_lo && lambda <= n.lambda_hi)
        .collect();
    match matches.len() {
        0 => Err(SelectError::LambdaNotCovered { lambda }),
        1 => Ok(LambdaSolution { beta: matches[0].beta.clone(), unique: true }),
        _ => {
            let widest = matches
                .iter()
                .max_by(|a, b| a.radius.total_cmp(&b.radius))
                .unwrap();
            Ok(LambdaSolution { beta: widest.beta.clone(), unique: false })
        }
    }
}

/// Direction of the complexity term in the BIC score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BicSign {
    /// `log(mean loss) - (log n / 2n) * n_R`: rewards interpolated residuals.
    #[default]
    Printed,
    /// `log(mean loss) + (log n / 2n) * n_R`: the usual penalty direction.
    Conventional,
}

/// BIC evaluated at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct BicEntry {
    pub radius: f64,
    /// Total check loss at the node.
    pub loss: f64,
    /// Number of zero residuals (`n_R`).
    pub zero_residuals: usize,
    /// The score; infinite when the loss is zero (log guard).
    pub bic: f64,
}

/// BIC along the whole path, evaluated at the nodes. On segment interiors
/// the loss is affine and the zero-residual count constant, so each
/// segment's minimum sits at an endpoint and node evaluation is exhaustive.
#[derive(Debug, Clone, PartialEq)]
pub struct BicTrace {
    pub entries: Vec<BicEntry>,
    /// Radius of the smallest finite score.
    pub argmin_radius: f64,
    pub sign: BicSign,
}

pub fn bic_trace(path: &SolutionPath, sign: BicSign) -> Result<BicTrace, SelectError> {
    let nodes = path.nodes();
    if nodes.is_empty() {
        return Err(SelectError::EmptyPath);
    }
    let problem = path.problem();
    let n = problem.n_obs() as f64;
    let complexity_unit = n.ln() / (2.0 * n);

    let entries: Vec<BicEntry> = nodes
        .iter()
        .map(|node| {
            let loss: f64 = node
                .residuals
                .iter()
                .map(|&r| quantile_loss(r, problem.tau()))
                .sum();
            let zero_residuals = node
                .residuals
                .iter()
                .filter(|r| r.abs() <= ZERO_RESIDUAL_TOL)
                .count();
            // A node whose residuals are all within the zero threshold is
            // an exact fit up to solver noise: the log term is guarded.
            let exact_fit = zero_residuals == node.residuals.len();
            let bic = if exact_fit || loss <= 0.0 {
                f64::INFINITY
            } else {
                let fit = (loss / n).ln();
                let complexity = complexity_unit * zero_residuals as f64;
                match sign {
                    BicSign::Printed => fit - complexity,
                    BicSign::Conventional => fit + complexity,
                }
            };
            BicEntry { radius: node.radius, loss, zero_residuals, bic }
        })
        .collect();

    let argmin = entries
        .iter()
        .filter(|e| e.bic.is_finite())
        .min_by(|a, b| a.bic.total_cmp(&b.bic))
        .ok_or(SelectError::NoFiniteBic)?;
    Ok(BicTrace { argmin_radius: argmin.radius, entries, sign })
}

/// `(R, total loss)` at each node: the convex piecewise-linear trade-off
/// curve whose segment slopes equal `-lambda`.
pub fn tradeoff_curve(path: &SolutionPath) -> Vec<(f64, f64)> {
    path.nodes()
        .iter()
        .map(|node| (node.radius, total_loss(&node.beta, path.problem())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homotopy::{solve_path, SolverOptions, StopRule};
    use crate::testutil::{assert_close, demo_problem};

    fn demo_path() -> SolutionPath {
        solve_path(&demo_problem(), &StopRule::default(), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn interpolation_at_r() {
        let path = demo_path();
        assert_close(&interpolate_at_r(&path, 0.5).unwrap(), &[0.0, 0.5, 0.5], 1e-12);
        assert_close(
            &interpolate_at_r(&path, 1.75).unwrap(),
            &[-1.5, 0.25, 0.25],
            1e-9,
        );
        // Node values come back exactly.
        let node2 = &path.nodes()[2];
        assert_eq!(interpolate_at_r(&path, node2.radius).unwrap(), node2.beta);
        assert!(interpolate_at_r(&path, 100.0).is_err());
        assert!(interpolate_at_r(&path, -0.1).is_err());
    }

    #[test]
    fn interpolation_at_lambda() {
        let path = demo_path();
        let sol = interpolate_at_lambda(&path, 10.0).unwrap();
        assert!(sol.unique);
        assert_close(&sol.beta, &[0.0, 1.0, 1.0], 1e-9);
        let sol = interpolate_at_lambda(&path, 100.0).unwrap();
        assert_close(&sol.beta, &[0.0, 0.0, 0.0], 0.0);
        // Breakpoint lambda: non-unique, larger-R representative.
        let shared = path.nodes()[1].lambda_lo;
        let sol = interpolate_at_lambda(&path, shared).unwrap();
        assert!(!sol.unique);
        assert_close(&sol.beta, &path.nodes()[2].beta.clone(), 0.0);
        assert!(interpolate_at_lambda(&path, -1.0).is_err());
    }

    #[test]
    fn truncated_path_rejects_uncovered_lambda() {
        let path = solve_path(
            &demo_problem(),
            &StopRule::max_groups(1),
            &SolverOptions::default(),
        )
        .unwrap();
        let lambda_stop = path.nodes().last().unwrap().lambda_lo;
        assert!(interpolate_at_lambda(&path, lambda_stop).is_ok());
        assert!(matches!(
            interpolate_at_lambda(&path, 0.5 * lambda_stop),
            Err(SelectError::LambdaNotCovered { .. })
        ));
    }

    #[test]
    fn bic_values_at_known_nodes() {
        let path = demo_path();
        let trace = bic_trace(&path, BicSign::Printed).unwrap();
        // Node at R = 0: loss 26, no zero residuals.
        let e0 = &trace.entries[0];
        assert_close(&[e0.loss], &[26.0], 1e-9);
        assert_eq!(e0.zero_residuals, 0);
        assert!((e0.bic - (26.0f64 / 3.0).ln()).abs() < 1e-12);
        // Node at R = 2: loss 4, one zero residual.
        let e4 = &trace.entries[4];
        assert_close(&[e4.loss], &[4.0], 1e-9);
        assert_eq!(e4.zero_residuals, 1);
        let expected = (4.0f64 / 3.0).ln() - 3.0f64.ln() / 6.0;
        assert!((e4.bic - expected).abs() < 1e-12);
        // Final node fits exactly: guarded as infinite, excluded from argmin.
        assert!(trace.entries[6].bic.is_infinite());
        assert!(trace.argmin_radius < 229.0 / 40.0);
    }

    #[test]
    fn bic_conventional_trace_is_finite_with_unique_argmin() {
        let path = demo_path();
        let trace = bic_trace(&path, BicSign::Conventional).unwrap();
        let finite: Vec<&BicEntry> = trace.entries.iter().filter(|e| e.bic.is_finite()).collect();
        assert_eq!(finite.len(), 6);
        let min = finite.iter().map(|e| e.bic).fold(f64::INFINITY, f64::min);
        assert_eq!(
            finite.iter().filter(|e| (e.bic - min).abs() < 1e-12).count(),
            1
        );
    }

    #[test]
    fn tradeoff_curve_matches_table() {
        let path = demo_path();
        let curve = tradeoff_curve(&path);
        let want = [
            (0.0, 26.0),
            (1.0, 9.0),
            (27.0 / 22.0, 161.0 / 22.0),
            (1.5, 5.5),
            (2.0, 4.0),
            (25.0 / 12.0, 23.0 / 6.0),
            (229.0 / 40.0, 0.0),
        ];
        for ((r, l), (wr, wl)) in curve.iter().zip(&want) {
            assert!((r - wr).abs() < 1e-9 && (l - wl).abs() < 1e-9);
        }
        // Slope of each segment equals minus the shared lambda.
        for t in 0..curve.len() - 1 {
            let slope = (curve[t + 1].1 - curve[t].1) / (curve[t + 1].0 - curve[t].0);
            let lambda = path.nodes()[t + 1].lambda_hi;
            assert!((slope + lambda).abs() < 1e-9, "segment {t}");
        }
    }

    #[test]
    fn conventional_penalty_is_monotone_in_zero_count() {
        // More interpolated residuals never lower the complexity term.
        let n = 7.0f64;
        let unit = n.ln() / (2.0 * n);
        let mut prev = f64::NEG_INFINITY;
        for n_r in 0..=7 {
            let term = unit * n_r as f64;
            assert!(term >= prev);
            prev = term;
        }
    }
}
