//! Solution paths for group-sparse quantile regression.
//!
//! Minimizes the check loss `sum_i rho_tau((y - X beta)_i)` penalized by the
//! mixed l1/l-infinity norm `lambda * sum_k max_{j in G_k} |beta_j|` over
//! disjoint coefficient groups `G_1..G_g`. The minimizer is piecewise linear
//! in the norm budget `R = ||beta||_{1,inf}` (equivalently, piecewise constant
//! in `lambda`), and [`homotopy::solve_path`] computes every breakpoint of
//! that path exactly, together with the subgradient certificates `(u, w)`
//! that prove optimality of each segment.
//!
//! Module map:
//!
//! * [`problem`] — the problem data (`X`, `y`, `tau`, groups) and evaluation
//!   of the check loss, residuals, and mixed norm.
//! * [`path`] — path data model: nodes, affine segments, event tags.
//! * [`subgrad`] — subdifferentials of the loss and penalty, and a KKT
//!   verifier for `(beta, lambda, u, w)` certificates.
//! * [`homotopy`] — the path engine.
//! * [`select`] — interpolation along the path, BIC traces, trade-off curves.
//! * [`multiresponse`] — stacking several response vectors into one problem
//!   so that each regressor's coefficients form a group.
//! * [`ingest`] — turning tabular data into problems: dummy coding,
//!   polynomial groups, standardization, jitter.
//! * [`oracle`] — an independent brute-force minimizer used for testing.

pub mod homotopy;
pub mod ingest;
pub mod mat;
#[cfg(test)]
pub(crate) mod testutil;
pub mod multiresponse;
pub mod oracle;
pub mod path;
pub mod problem;
pub mod select;
pub mod subgrad;

pub use homotopy::{
    beta_direction, initialize, next_lambda_event, next_r_event, solve_path, subgradient_update,
    ActiveState, SolveError, SolverOptions, StepError, StopRule,
};
pub use mat::Mat;
pub use path::{AffineVector, EventTag, PathNode, SolutionPath, Termination};
pub use problem::{mixed_norm, quantile_loss, residuals, total_loss, QuantileProblem};
pub use select::{bic_trace, interpolate_at_lambda, interpolate_at_r, tradeoff_curve, BicSign, BicTrace};
pub use subgrad::{group_norm_subgradient_check, kkt_verify, rho_subdifferential, Interval, KktReport};
