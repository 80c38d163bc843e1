//! The path engine.
//!
//! Starting from `beta = 0` at the activation threshold `lambda_max`, the
//! solver alternates two phases. The R phase expresses `beta` as an affine
//! function of the norm budget `R` (using the active groups, the maximal set
//! and signs inside each, and the pinned zero residuals) and advances `R` to
//! the first structural event: a residual hitting zero, a group collapsing,
//! or a non-maximal coefficient catching its group's magnitude. The lambda
//! phase solves for the subgradient certificates `u` (affine in `1/lambda`)
//! and `w` (affine in `lambda`) on the new segment and lowers `lambda` to the
//! first certificate event: an inactive group reaching the unit l1 sphere, a
//! `w` coordinate hitting its bound, or a maximal coordinate's subgradient
//! vanishing. Each R breakpoint becomes one [`PathNode`].
//!
//! Events are detected by scalar linear root-finding; two events landing on
//! the same breakpoint violate the one-at-a-time assumption and abort the
//! solve with a tie diagnostic (the standard remedy is a small jitter of the
//! data, see [`crate::ingest::jitter`]).

use thiserror::Error;

use crate::mat::{solve_dense, Mat, SingularSystem};
use crate::path::{
    inverse_param, AffineVector, DegeneracyKind, EventTag, PathNode, SolutionPath, Termination,
};
use crate::problem::{residuals, QuantileProblem};

/// The combinatorial state that holds between two breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveState {
    /// Copy of the group partition (sorted column lists).
    pub groups: Vec<Vec<usize>>,
    /// Group index of each column.
    pub group_of: Vec<usize>,
    /// Quantile level, fixing the subgradient bounds `[-2(1-tau), 2tau]`.
    pub tau: f64,
    /// Whether each group currently has nonzero coefficients.
    pub active: Vec<bool>,
    /// Per group: sorted columns attaining the group's shared magnitude.
    /// Empty for inactive groups.
    pub maximal: Vec<Vec<usize>>,
    /// Per column: coefficient sign on maximal columns, 0 elsewhere.
    pub sign: Vec<f64>,
    /// Per observation: whether the residual is pinned at zero.
    pub in_zero: Vec<bool>,
    /// Per observation: the fixed value of `w_i` while `r_i != 0`.
    pub boundary_w: Vec<f64>,
}

impl ActiveState {
    fn new(problem: &QuantileProblem, boundary_w: Vec<f64>) -> Self {
        let g = problem.n_groups();
        ActiveState {
            groups: problem.groups().to_vec(),
            group_of: (0..problem.n_cols()).map(|j| problem.group_of(j)).collect(),
            tau: problem.tau(),
            active: vec![false; g],
            maximal: vec![Vec::new(); g],
            sign: vec![0.0; problem.n_cols()],
            in_zero: vec![false; problem.n_obs()],
            boundary_w,
        }
    }

    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.in_zero.len()).filter(|&i| self.in_zero[i]).collect()
    }

    pub fn zero_count(&self) -> usize {
        self.in_zero.iter().filter(|z| **z).count()
    }

    pub fn active_groups(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&k| self.active[k]).collect()
    }

    /// Columns of active groups that are not maximal (free coefficients).
    pub fn nonmaximal_columns(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for k in self.active_groups() {
            for &j in &self.groups[k] {
                if !self.maximal[k].contains(&j) {
                    out.push(j);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn activate_group(&mut self, k: usize, u_values: &[f64], activation_tol: f64) {
        self.active[k] = true;
        self.maximal[k].clear();
        for &j in &self.groups[k].clone() {
            if u_values[j].abs() > activation_tol {
                self.maximal[k].push(j);
                self.sign[j] = u_values[j].signum();
            }
        }
        self.maximal[k].sort_unstable();
    }
}

/// When to stop extending the path. The default runs until `lambda = 0`
/// (or full residual saturation).
#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    pub max_active_groups: Option<usize>,
    pub max_radius: Option<f64>,
    pub run_to_lambda_zero: bool,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_active_groups: None,
            max_radius: None,
            run_to_lambda_zero: true,
        }
    }
}

impl StopRule {
    pub fn max_groups(k: usize) -> Self {
        StopRule {
            max_active_groups: Some(k),
            ..StopRule::default()
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        if !self.run_to_lambda_zero && self.max_active_groups.is_none() && self.max_radius.is_none()
        {
            return Err(SolveError::InvalidStopRule);
        }
        if self.max_active_groups == Some(0) {
            return Err(SolveError::InvalidStopRule);
        }
        Ok(())
    }
}

/// Numerical policy of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative gap below which two event candidates count as tied.
    pub tie_tol: f64,
    /// Margin by which a root must lie beyond the current parameter,
    /// relative to the parameter's magnitude (floored at 1).
    pub strict_margin: f64,
    /// Pivot threshold relative to the matrix infinity norm.
    pub pivot_tol: f64,
    /// Threshold on `|u_j|` for a coordinate to join a maximal set at
    /// group activation.
    pub activation_tol: f64,
    /// Lambda roots below this value are treated as the path end.
    pub lambda_floor: f64,
    /// Event budget; `None` picks a generous bound from the problem size.
    pub max_events: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tie_tol: 1e-10,
            strict_margin: 1e-12,
            pivot_tol: 1e-12,
            activation_tol: 1e-9,
            lambda_floor: 1e-12,
            max_events: None,
        }
    }
}

/// A step of the engine could not proceed.
#[derive(Debug, Clone, Error)]
pub enum StepError {
    #[error("singular system while {context}: {source} (near-degenerate data; jitter and retry)")]
    Singular {
        context: &'static str,
        source: SingularSystem,
    },
    #[error("{unknowns} unknowns vs {equations} equations while {context} (degenerate structure; jitter the data and retry)")]
    DofImbalance {
        context: &'static str,
        unknowns: usize,
        equations: usize,
    },
    #[error("tied events: {detail} (one-at-a-time condition violated; jitter the data and retry)")]
    TieBreak { detail: String },
}

/// Initialization failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum InitError {
    #[error("residual {index} is zero at beta = 0; jitter the data and retry")]
    ZeroResidualAtStart { index: usize },
    #[error("no group ever activates: X^T w vanishes on every group at beta = 0")]
    NoPositiveLambdaMax,
    #[error("groups {groups:?} reach the activation threshold together at lambda = {lambda}; jitter the data and retry")]
    TieAtLambdaMax { lambda: f64, groups: Vec<usize> },
}

/// Precondition failures of [`solve_path`]. Mid-path degeneracies do not
/// error; they terminate the path with [`Termination::Degenerate`].
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error("residual {index} is zero at beta = 0; jitter the data and retry")]
    ZeroResidualAtStart { index: usize },
    #[error("stop rule must enable run_to_lambda_zero, max_active_groups >= 1, or max_radius")]
    InvalidStopRule,
}

/// Fixed loss subgradient at `beta = 0` and the matching `X^T w`.
fn boundary_certificates(problem: &QuantileProblem) -> (Vec<f64>, Vec<f64>) {
    let w0: Vec<f64> = problem
        .response()
        .iter()
        .map(|&yi| if yi > 0.0 { problem.w_upper() } else { problem.w_lower() })
        .collect();
    let u1 = problem.design().t_matvec(&w0);
    (w0, u1)
}

/// Builds the `R = 0` node and the state with the first group activated.
///
/// `lambda_max` is the largest lambda at which some group's subgradient
/// block reaches the unit l1 sphere; since `u = X^T w / lambda` at
/// `beta = 0`, each group yields the closed-form root
/// `lambda_k = ||(X^T w)_{G_k}||_1`.
pub fn initialize(problem: &QuantileProblem) -> Result<(PathNode, ActiveState), InitError> {
    initialize_with(problem, &SolverOptions::default())
}

pub(crate) fn initialize_with(
    problem: &QuantileProblem,
    opts: &SolverOptions,
) -> Result<(PathNode, ActiveState), InitError> {
    if let Some(index) = problem.response().iter().position(|&yi| yi == 0.0) {
        return Err(InitError::ZeroResidualAtStart { index });
    }
    let (w0, u1) = boundary_certificates(problem);

    let lambdas: Vec<f64> = problem
        .groups()
        .iter()
        .map(|g| g.iter().map(|&j| u1[j].abs()).sum())
        .collect();
    let entering = (0..lambdas.len())
        .max_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]))
        .expect("at least one group");
    let lambda_max = lambdas[entering];
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return Err(InitError::NoPositiveLambdaMax);
    }
    let tied: Vec<usize> = (0..lambdas.len())
        .filter(|&k| {
            k != entering && (lambda_max - lambdas[k]).abs() <= opts.tie_tol * lambda_max.max(1.0)
        })
        .collect();
    if !tied.is_empty() {
        let mut groups = vec![entering];
        groups.extend(tied);
        groups.sort_unstable();
        return Err(InitError::TieAtLambdaMax { lambda: lambda_max, groups });
    }

    let m = problem.n_cols();
    let node = PathNode {
        radius: 0.0,
        lambda_lo: lambda_max,
        lambda_hi: f64::INFINITY,
        beta: vec![0.0; m],
        residuals: problem.response().to_vec(),
        u: AffineVector::new(vec![0.0; m], u1.clone(), 0.0, 1.0 / lambda_max),
        w: AffineVector::constant(w0.clone(), lambda_max, f64::INFINITY),
        event: EventTag::Init,
        exit_event: Some(EventTag::GroupActivates(entering)),
    };

    let mut state = ActiveState::new(problem, w0);
    let u_at_entry: Vec<f64> = u1.iter().map(|v| v / lambda_max).collect();
    state.activate_group(entering, &u_at_entry, opts.activation_tol);
    Ok((node, state))
}

/// Expresses `beta` as an affine function of `R` on the current segment.
///
/// Unknowns are one shared magnitude per active group plus each free
/// (non-maximal) coefficient; equations are `r_i = 0` on the pinned rows
/// plus the budget identity `sum_k t_k = R`. The system must be square.
pub fn beta_direction(
    state: &ActiveState,
    problem: &QuantileProblem,
    node: &PathNode,
) -> Result<AffineVector, StepError> {
    beta_direction_with(state, problem, node, &SolverOptions::default())
}

pub(crate) fn beta_direction_with(
    state: &ActiveState,
    problem: &QuantileProblem,
    node: &PathNode,
    opts: &SolverOptions,
) -> Result<AffineVector, StepError> {
    let zero_rows = state.zero_rows();
    let act = state.active_groups();
    let nonmax = state.nonmaximal_columns();
    let unknowns = act.len() + nonmax.len();
    let equations = zero_rows.len() + 1;
    if unknowns != equations {
        return Err(StepError::DofImbalance {
            context: "expressing beta as a function of R",
            unknowns,
            equations,
        });
    }

    let x = problem.design();
    let dim = unknowns;
    let mut a = Mat::zeros(dim, dim);
    let mut rhs0 = vec![0.0; dim];
    let mut rhs1 = vec![0.0; dim];
    for (row, &i) in zero_rows.iter().enumerate() {
        for (c, &k) in act.iter().enumerate() {
            *a.at_mut(row, c) = state.maximal[k]
                .iter()
                .map(|&j| state.sign[j] * x.at(i, j))
                .sum();
        }
        for (c, &j) in nonmax.iter().enumerate() {
            *a.at_mut(row, act.len() + c) = x.at(i, j);
        }
        rhs0[row] = problem.response()[i];
    }
    let last = dim - 1;
    for c in 0..act.len() {
        *a.at_mut(last, c) = 1.0;
    }
    rhs1[last] = 1.0;

    let sol = solve_dense(&a, &[&rhs0, &rhs1], opts.pivot_tol).map_err(|source| {
        StepError::Singular { context: "expressing beta as a function of R", source }
    })?;

    let m = problem.n_cols();
    let mut beta0 = vec![0.0; m];
    let mut beta1 = vec![0.0; m];
    for (c, &k) in act.iter().enumerate() {
        for &j in &state.maximal[k] {
            beta0[j] = state.sign[j] * sol[0][c];
            beta1[j] = state.sign[j] * sol[1][c];
        }
    }
    for (c, &j) in nonmax.iter().enumerate() {
        beta0[j] = sol[0][act.len() + c];
        beta1[j] = sol[1][act.len() + c];
    }
    Ok(AffineVector::new(beta0, beta1, node.radius, f64::INFINITY))
}

/// Finds the smallest `R > r_now` at which the current direction stops being
/// valid, together with the reason. Returns `(inf, Terminal)` if nothing
/// ever happens.
pub fn next_r_event(
    state: &ActiveState,
    beta_fn: &AffineVector,
    problem: &QuantileProblem,
    r_now: f64,
) -> Result<(f64, EventTag), StepError> {
    next_r_event_with(state, beta_fn, problem, r_now, &SolverOptions::default())
}

pub(crate) fn next_r_event_with(
    state: &ActiveState,
    beta_fn: &AffineVector,
    problem: &QuantileProblem,
    r_now: f64,
    opts: &SolverOptions,
) -> Result<(f64, EventTag), StepError> {
    let r0 = residuals(beta_fn.constant_part(), problem);
    let r_slope = problem.design().matvec(beta_fn.linear_part());
    let min_r = r_now + opts.strict_margin * r_now.abs().max(1.0);
    let mut candidates: Vec<(f64, EventTag)> = Vec::new();

    // (a) a free residual crosses zero: r_i(R) = r0_i - R * slope_i.
    for i in 0..problem.n_obs() {
        if state.in_zero[i] || r_slope[i] == 0.0 {
            continue;
        }
        let root = r0[i] / r_slope[i];
        if root.is_finite() && root > min_r {
            candidates.push((root, EventTag::ResidualHitsZero(i)));
        }
    }

    // (b) an active group's magnitude reaches zero.
    for k in state.active_groups() {
        let j = state.maximal[k][0];
        let t0 = state.sign[j] * beta_fn.constant_part()[j];
        let t1 = state.sign[j] * beta_fn.linear_part()[j];
        if t1 == 0.0 {
            continue;
        }
        let root = -t0 / t1;
        if root.is_finite() && root > min_r {
            candidates.push((root, EventTag::GroupDeactivates(k)));
        }
    }

    // (c) a free coefficient catches its group's magnitude (either sign).
    for &j in &state.nonmaximal_columns() {
        let k = state.group_of[j];
        let jm = state.maximal[k][0];
        let t0 = state.sign[jm] * beta_fn.constant_part()[jm];
        let t1 = state.sign[jm] * beta_fn.linear_part()[jm];
        let b0 = beta_fn.constant_part()[j];
        let b1 = beta_fn.linear_part()[j];
        for sgn in [1.0, -1.0] {
            let denom = b1 - sgn * t1;
            if denom == 0.0 {
                continue;
            }
            let root = (sgn * t0 - b0) / denom;
            if root.is_finite() && root > min_r {
                candidates.push((root, EventTag::ComponentReachesGroupMax(j)));
            }
        }
    }

    let Some(&(best, tag)) = candidates
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
    else {
        return Ok((f64::INFINITY, EventTag::Terminal));
    };
    for &(root, other) in &candidates {
        if other != tag && (root - best).abs() <= opts.tie_tol * best.abs().max(1.0) {
            return Err(StepError::TieBreak {
                detail: format!("{} and {} both fire at R = {best}", tag.label(), other.label()),
            });
        }
    }
    Ok((best, tag))
}

/// Solves the certificate systems on the segment that starts at `node`.
///
/// Splitting `u = u0 + u1/lambda` and `w = w0 + lambda w1`, stationarity is
/// equivalent to `u1 = X^T w0` and `u0 = X^T w1`. The unknown `w` entries on
/// the pinned rows are determined by requiring `u_j = 0` on non-maximal
/// columns of active groups and the unit face sum per active group; both
/// affine parts share one matrix and differ only in the right-hand side.
pub fn subgradient_update(
    state: &ActiveState,
    problem: &QuantileProblem,
    node: &PathNode,
) -> Result<(AffineVector, AffineVector), StepError> {
    subgradient_update_raw(state, problem, node.lambda_hi, &SolverOptions::default())
}

pub(crate) fn subgradient_update_raw(
    state: &ActiveState,
    problem: &QuantileProblem,
    lambda_hi: f64,
    opts: &SolverOptions,
) -> Result<(AffineVector, AffineVector), StepError> {
    let zero_rows = state.zero_rows();
    let act = state.active_groups();
    let nonmax = state.nonmaximal_columns();
    let equations = nonmax.len() + act.len();
    if equations != zero_rows.len() {
        return Err(StepError::DofImbalance {
            context: "updating the subgradient certificates",
            unknowns: zero_rows.len(),
            equations,
        });
    }

    let x = problem.design();
    let n = problem.n_obs();
    let dim = zero_rows.len();
    let mut a = Mat::zeros(dim, dim);
    let mut rhs0 = vec![0.0; dim];
    let mut rhs1 = vec![0.0; dim];
    let mut row = 0;
    for &j in &nonmax {
        for (c, &i) in zero_rows.iter().enumerate() {
            *a.at_mut(row, c) = x.at(i, j);
        }
        rhs0[row] = -(0..n)
            .filter(|&i| !state.in_zero[i])
            .map(|i| x.at(i, j) * state.boundary_w[i])
            .sum::<f64>();
        row += 1;
    }
    for &k in &act {
        let face = |i: usize| -> f64 {
            state.maximal[k]
                .iter()
                .map(|&j| state.sign[j] * x.at(i, j))
                .sum()
        };
        for (c, &i) in zero_rows.iter().enumerate() {
            *a.at_mut(row, c) = face(i);
        }
        rhs0[row] = -(0..n)
            .filter(|&i| !state.in_zero[i])
            .map(|i| face(i) * state.boundary_w[i])
            .sum::<f64>();
        rhs1[row] = 1.0;
        row += 1;
    }

    let sol = solve_dense(&a, &[&rhs0, &rhs1], opts.pivot_tol).map_err(|source| {
        StepError::Singular { context: "updating the subgradient certificates", source }
    })?;

    let mut w0 = state.boundary_w.clone();
    let mut w1 = vec![0.0; n];
    for (c, &i) in zero_rows.iter().enumerate() {
        w0[i] = sol[0][c];
        w1[i] = sol[1][c];
    }
    let u1 = x.t_matvec(&w0);
    let u0 = x.t_matvec(&w1);

    let s_lo = inverse_param(lambda_hi);
    let u_fn = AffineVector::new(u0, u1, s_lo, f64::INFINITY);
    let w_fn = AffineVector::new(w0, w1, 0.0, lambda_hi);
    Ok((u_fn, w_fn))
}

/// Finds the largest `lambda < lambda_now` at which the certificates stop
/// being valid, together with the reason. Returns `(0, Terminal)` when they
/// hold all the way down.
pub fn next_lambda_event(
    state: &ActiveState,
    u_fn: &AffineVector,
    w_fn: &AffineVector,
    lambda_now: f64,
) -> Result<(f64, EventTag), StepError> {
    next_lambda_event_with(state, u_fn, w_fn, lambda_now, &SolverOptions::default())
}

pub(crate) fn next_lambda_event_with(
    state: &ActiveState,
    u_fn: &AffineVector,
    w_fn: &AffineVector,
    lambda_now: f64,
    opts: &SolverOptions,
) -> Result<(f64, EventTag), StepError> {
    let s_now = inverse_param(lambda_now);
    let mut candidates: Vec<(f64, EventTag)> = Vec::new();

    // (a) an inactive group's ||u||_1 reaches 1; piecewise linear in 1/lambda.
    // A group that just deactivated sits exactly on the unit sphere: if its
    // trajectory exits the ball, it re-activates at the current lambda with
    // flipped signs (the coefficients pass through zero), which shows up as
    // a candidate at lambda_now itself.
    for (k, group) in state.groups.iter().enumerate() {
        if state.active[k] {
            continue;
        }
        let c0: Vec<f64> = group.iter().map(|&j| u_fn.constant_part()[j]).collect();
        let c1: Vec<f64> = group.iter().map(|&j| u_fn.linear_part()[j]).collect();
        let f = |s: f64| -> f64 { c0.iter().zip(&c1).map(|(&a, &b)| (a + s * b).abs()).sum() };
        let probe = s_now * (1.0 + 1e-9) + 1e-12;
        if f(s_now) >= 1.0 - 1e-9 && f(probe) > f(s_now) {
            candidates.push((lambda_now, EventTag::GroupActivates(k)));
            continue;
        }
        if let Some(s_star) = first_l1_crossing(&c0, &c1, s_now + opts.strict_margin * s_now.abs().max(1.0)) {
            let lambda_star = 1.0 / s_star;
            if lambda_star >= opts.lambda_floor && lambda_star < lambda_now {
                candidates.push((lambda_star, EventTag::GroupActivates(k)));
            }
        }
    }

    // (b) a pinned row's w hits a subgradient bound; linear in lambda.
    let bounds = [2.0 * state.tau, -2.0 * (1.0 - state.tau)];
    for i in state.zero_rows() {
        let w0 = w_fn.constant_part()[i];
        let w1 = w_fn.linear_part()[i];
        if w1 == 0.0 {
            continue;
        }
        for bound in bounds {
            let root = (bound - w0) / w1;
            if root >= opts.lambda_floor && root < lambda_now - opts.strict_margin * lambda_now.abs().max(1.0) {
                candidates.push((root, EventTag::ResidualLeavesZero(i)));
            }
        }
    }

    // (c) a maximal coordinate's u reaches zero; linear in 1/lambda. A
    // singleton maximal set has u pinned at +-1 by the face sum, so only
    // larger sets are monitored.
    for k in state.active_groups() {
        if state.maximal[k].len() < 2 {
            continue;
        }
        for &j in &state.maximal[k] {
            let a0 = u_fn.constant_part()[j];
            let a1 = u_fn.linear_part()[j];
            if a1 == 0.0 {
                continue;
            }
            let s_star = -a0 / a1;
            if s_star > s_now + opts.strict_margin * s_now.abs().max(1.0) && s_star.is_finite() {
                let lambda_star = 1.0 / s_star;
                if lambda_star >= opts.lambda_floor {
                    candidates.push((lambda_star, EventTag::ComponentLeavesGroupMax(j)));
                }
            }
        }
    }

    let Some(&(best, tag)) = candidates
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
    else {
        return Ok((0.0, EventTag::Terminal));
    };
    for &(root, other) in &candidates {
        if other != tag && (root - best).abs() <= opts.tie_tol * best.abs().max(1.0) {
            return Err(StepError::TieBreak {
                detail: format!(
                    "{} at lambda = {best:.17e} and {} at lambda = {root:.17e}",
                    tag.label(),
                    other.label()
                ),
            });
        }
    }
    Ok((best, tag))
}

/// Smallest `s >= s_start` with `sum_j |c0_j + s c1_j| = 1`. The sum is
/// convex piecewise linear; each piece between component sign changes is
/// solved exactly.
fn first_l1_crossing(c0: &[f64], c1: &[f64], s_start: f64) -> Option<f64> {
    let f = |s: f64| -> f64 { c0.iter().zip(c1).map(|(&a, &b)| (a + s * b).abs()).sum() };

    let mut kinks: Vec<f64> = c0
        .iter()
        .zip(c1)
        .filter_map(|(&a, &b)| {
            if b == 0.0 {
                return None;
            }
            let s = -a / b;
            (s.is_finite() && s > s_start).then_some(s)
        })
        .collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    // Only up-crossings count: a valid certificate can sit on the sphere
    // but never approaches it from outside, so an apparent down-crossing is
    // floating-point noise from starting exactly on the face.
    let mut lo = s_start;
    let mut f_lo = f(lo);
    for &hi in &kinks {
        let f_hi = f(hi);
        if f_lo <= 1.0 && f_hi > 1.0 {
            let t = (1.0 - f_lo) / (f_hi - f_lo);
            return Some(lo + t * (hi - lo));
        }
        lo = hi;
        f_lo = f_hi;
    }

    // Unbounded last piece: the slope is constant beyond the final kink.
    let probe = lo + lo.abs().max(1.0);
    let slope: f64 = c0
        .iter()
        .zip(c1)
        .map(|(&a, &b)| {
            let v = a + probe * b;
            if v > 0.0 {
                b
            } else if v < 0.0 {
                -b
            } else {
                0.0
            }
        })
        .sum();
    if slope > 0.0 && f_lo < 1.0 {
        let f_probe = f(probe);
        let root = probe + (1.0 - f_probe) / slope;
        if root.is_finite() && root >= lo {
            return Some(root.max(s_start));
        }
    }
    None
}

pub(crate) fn apply_r_event(state: &mut ActiveState, event: EventTag, new_beta: &[f64]) {
    match event {
        EventTag::ResidualHitsZero(i) => state.in_zero[i] = true,
        EventTag::GroupDeactivates(k) => {
            state.active[k] = false;
            for &j in &state.maximal[k] {
                state.sign[j] = 0.0;
            }
            state.maximal[k].clear();
        }
        EventTag::ComponentReachesGroupMax(j) => {
            let k = state.group_of[j];
            state.sign[j] = if new_beta[j] >= 0.0 { 1.0 } else { -1.0 };
            state.maximal[k].push(j);
            state.maximal[k].sort_unstable();
        }
        _ => debug_assert!(false, "not an R event: {event:?}"),
    }
}

pub(crate) fn apply_lambda_event(
    state: &mut ActiveState,
    event: EventTag,
    u_fn: &AffineVector,
    w_fn: &AffineVector,
    lambda_break: f64,
    lambda_now: f64,
    opts: &SolverOptions,
) {
    match event {
        EventTag::GroupActivates(k) => {
            let s = inverse_param(lambda_break);
            let mut u_values: Vec<f64> = (0..u_fn.len()).map(|j| u_fn.component(j, s)).collect();
            // Re-activation at the segment's own lambda is a bounce: the
            // group's coefficients passed through zero, so they re-enter
            // with flipped signs relative to the stale face certificate.
            if lambda_break == lambda_now {
                for v in u_values.iter_mut() {
                    *v = -*v;
                }
            }
            state.activate_group(k, &u_values, opts.activation_tol);
        }
        EventTag::ResidualLeavesZero(i) => {
            state.in_zero[i] = false;
            let w_i = w_fn.component(i, lambda_break);
            let hi = 2.0 * state.tau;
            let lo = -2.0 * (1.0 - state.tau);
            state.boundary_w[i] = if (w_i - hi).abs() <= (w_i - lo).abs() { hi } else { lo };
        }
        EventTag::ComponentLeavesGroupMax(j) => {
            let k = state.group_of[j];
            state.maximal[k].retain(|&c| c != j);
            state.sign[j] = 0.0;
        }
        _ => debug_assert!(false, "not a lambda event: {event:?}"),
    }
}

fn degenerate(err: StepError) -> Termination {
    let kind = match err {
        StepError::TieBreak { .. } => DegeneracyKind::TieBreak,
        _ => DegeneracyKind::Singular,
    };
    Termination::Degenerate { kind, detail: err.to_string() }
}

/// A node whose lambda interval is collapsed to a single point, certified by
/// the previous segment's functions evaluated there. Used for user stops at
/// a prescribed radius and for degenerate terminations.
fn point_node(
    radius: f64,
    beta: Vec<f64>,
    residuals: Vec<f64>,
    event: EventTag,
    lambda: f64,
    prev: &PathNode,
) -> PathNode {
    let s = inverse_param(lambda);
    PathNode {
        radius,
        lambda_lo: lambda,
        lambda_hi: lambda,
        u: AffineVector::constant(prev.u.value(s), s, s),
        w: AffineVector::constant(prev.w.value(lambda), lambda, lambda),
        beta,
        residuals,
        event,
        exit_event: None,
    }
}

/// Slopes this small on a terminal segment are solver noise around an exact
/// zero; flattening them keeps `u` finite at `lambda = 0`.
const TERMINAL_SLOPE_TOL: f64 = 1e-8;

/// `|d(loss)/dR + lambda|` for one segment, from the direction itself. On
/// unpinned rows the loss derivative is the fixed subgradient times the
/// residual slope; pinned rows contribute nothing.
fn slope_defect(
    state: &ActiveState,
    beta_fn: &AffineVector,
    problem: &QuantileProblem,
    lambda: f64,
) -> f64 {
    let residual_slope = problem.design().matvec(beta_fn.linear_part());
    let loss_slope: f64 = residual_slope
        .iter()
        .enumerate()
        .filter(|(i, _)| !state.in_zero[*i])
        .map(|(i, &dr)| -state.boundary_w[i] * dr)
        .sum();
    (loss_slope + lambda).abs()
}

/// Computes the full solution path.
///
/// Ties, singular systems, and structural imbalances do not abort: the path
/// built so far is returned with [`Termination::Degenerate`] and a
/// diagnostic. Only precondition violations return an error.
pub fn solve_path(
    problem: &QuantileProblem,
    stop: &StopRule,
    opts: &SolverOptions,
) -> Result<SolutionPath, SolveError> {
    stop.validate()?;

    let (node0, mut state) = match initialize_with(problem, opts) {
        Ok(pair) => pair,
        Err(InitError::ZeroResidualAtStart { index }) => {
            return Err(SolveError::ZeroResidualAtStart { index });
        }
        Err(err @ InitError::NoPositiveLambdaMax) => {
            let (w0, _) = boundary_certificates(problem);
            let m = problem.n_cols();
            let node = PathNode {
                radius: 0.0,
                lambda_lo: 0.0,
                lambda_hi: f64::INFINITY,
                beta: vec![0.0; m],
                residuals: problem.response().to_vec(),
                u: AffineVector::constant(vec![0.0; m], 0.0, f64::INFINITY),
                w: AffineVector::constant(w0, 0.0, f64::INFINITY),
                event: EventTag::Init,
                exit_event: None,
            };
            return Ok(SolutionPath::new(
                problem.clone(),
                vec![node],
                Termination::Degenerate {
                    kind: DegeneracyKind::NoActivation,
                    detail: err.to_string(),
                },
                0.0,
            ));
        }
        Err(err @ InitError::TieAtLambdaMax { .. }) => {
            let InitError::TieAtLambdaMax { lambda, .. } = err else { unreachable!() };
            let (w0, u1) = boundary_certificates(problem);
            let m = problem.n_cols();
            let node = PathNode {
                radius: 0.0,
                lambda_lo: lambda,
                lambda_hi: f64::INFINITY,
                beta: vec![0.0; m],
                residuals: problem.response().to_vec(),
                u: AffineVector::new(vec![0.0; m], u1, 0.0, 1.0 / lambda),
                w: AffineVector::constant(w0, lambda, f64::INFINITY),
                event: EventTag::Init,
                exit_event: None,
            };
            return Ok(SolutionPath::new(
                problem.clone(),
                vec![node],
                Termination::Degenerate {
                    kind: DegeneracyKind::TieBreak,
                    detail: err.to_string(),
                },
                0.0,
            ));
        }
    };

    let mut nodes = vec![node0];
    let mut lambda_now = nodes[0].lambda_lo;
    let mut r_now = 0.0;
    let budget = opts
        .max_events
        .unwrap_or(1000 + 50 * (problem.n_obs() + problem.n_cols() + problem.n_groups()));
    let mut termination = None;
    let mut max_slope_defect = 0.0f64;

    for _ in 0..budget {
        let prev = nodes.last().unwrap();
        let dir = match beta_direction_with(&state, problem, prev, opts) {
            Ok(d) => d,
            Err(e) => {
                termination = Some(degenerate(e));
                break;
            }
        };
        max_slope_defect = max_slope_defect.max(slope_defect(&state, &dir, problem, lambda_now));
        let (r_break, event) = match next_r_event_with(&state, &dir, problem, r_now, opts) {
            Ok(v) => v,
            Err(e) => {
                termination = Some(degenerate(e));
                break;
            }
        };

        if let Some(max_r) = stop.max_radius {
            if r_break > max_r {
                let beta = dir.value(max_r);
                let resid = residuals(&beta, problem);
                let prev = nodes.last().unwrap();
                nodes.push(point_node(max_r, beta, resid, EventTag::Terminal, lambda_now, prev));
                termination = Some(Termination::UserStop);
                break;
            }
        }
        if !r_break.is_finite() {
            termination = Some(Termination::Degenerate {
                kind: DegeneracyKind::Singular,
                detail: "no further R event on an unbounded segment".to_string(),
            });
            break;
        }

        let beta = dir.value(r_break);
        let resid = residuals(&beta, problem);
        apply_r_event(&mut state, event, &beta);

        let saturated = state.zero_count() == problem.n_obs();
        let (mut u_fn, w_fn) = match subgradient_update_raw(&state, problem, lambda_now, opts) {
            Ok(v) => v,
            Err(e) => {
                let prev = nodes.last().unwrap();
                nodes.push(point_node(r_break, beta, resid, event, lambda_now, prev));
                termination = Some(degenerate(e));
                break;
            }
        };

        let (lambda_break, exit_event) = if saturated {
            // All residuals are zero: beta stays optimal down to lambda = 0.
            (0.0, EventTag::Terminal)
        } else {
            match next_lambda_event_with(&state, &u_fn, &w_fn, lambda_now, opts) {
                Ok(v) => v,
                Err(e) => {
                    let prev = nodes.last().unwrap();
                    nodes.push(point_node(r_break, beta, resid, event, lambda_now, prev));
                    termination = Some(degenerate(e));
                    break;
                }
            }
        };

        let terminal = matches!(exit_event, EventTag::Terminal);
        if terminal && u_fn.max_abs_slope() <= TERMINAL_SLOPE_TOL {
            u_fn.flatten_slope();
        }
        nodes.push(PathNode {
            radius: r_break,
            lambda_lo: lambda_break,
            lambda_hi: lambda_now,
            u: u_fn.restrict(inverse_param(lambda_now), inverse_param(lambda_break)),
            w: w_fn.restrict(lambda_break, lambda_now),
            beta,
            residuals: resid,
            event,
            exit_event: (!terminal).then_some(exit_event),
        });

        if terminal {
            termination = Some(Termination::LambdaZero);
            break;
        }
        if let Some(max_r) = stop.max_radius {
            if r_break >= max_r {
                termination = Some(Termination::UserStop);
                break;
            }
        }
        if let EventTag::GroupActivates(_) = exit_event {
            if let Some(max_g) = stop.max_active_groups {
                if state.active.iter().filter(|a| **a).count() >= max_g {
                    termination = Some(Termination::MaxActiveGroups);
                    break;
                }
            }
        }
        apply_lambda_event(&mut state, exit_event, &u_fn, &w_fn, lambda_break, lambda_now, opts);
        lambda_now = lambda_break;
        r_now = r_break;
    }

    let termination = termination.unwrap_or(Termination::Degenerate {
        kind: DegeneracyKind::Singular,
        detail: format!("event budget of {budget} exhausted"),
    });
    Ok(SolutionPath::new(problem.clone(), nodes, termination, max_slope_defect))
}
