//! Path data model: affine segments, event tags, nodes, and whole paths.

use crate::problem::QuantileProblem;

/// A vector-valued affine function `s -> c0 + s * c1` of one scalar
/// parameter, valid on the closed range `[lo, hi]` (`hi` may be infinite).
///
/// Components with an exactly zero slope evaluate to `c0` even at an
/// infinite parameter, so segments that are constant in the limit stay
/// finite there.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVector {
    c0: Vec<f64>,
    c1: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl AffineVector {
    pub fn new(c0: Vec<f64>, c1: Vec<f64>, lo: f64, hi: f64) -> Self {
        assert_eq!(c0.len(), c1.len(), "affine parts must have equal length");
        assert!(lo <= hi, "empty parameter range [{lo}, {hi}]");
        AffineVector { c0, c1, lo, hi }
    }

    pub fn constant(value: Vec<f64>, lo: f64, hi: f64) -> Self {
        let n = value.len();
        AffineVector::new(value, vec![0.0; n], lo, hi)
    }

    pub fn len(&self) -> usize {
        self.c0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c0.is_empty()
    }

    pub fn constant_part(&self) -> &[f64] {
        &self.c0
    }

    pub fn linear_part(&self) -> &[f64] {
        &self.c1
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    #[inline]
    pub fn component(&self, idx: usize, s: f64) -> f64 {
        let c1 = self.c1[idx];
        if c1 == 0.0 {
            self.c0[idx]
        } else {
            self.c0[idx] + s * c1
        }
    }

    pub fn value(&self, s: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.component(i, s)).collect()
    }

    /// Returns the same function restricted to a new parameter range.
    pub fn restrict(&self, lo: f64, hi: f64) -> Self {
        AffineVector::new(self.c0.clone(), self.c1.clone(), lo, hi)
    }

    /// Forces the slope to exactly zero, keeping the constant part.
    pub(crate) fn flatten_slope(&mut self) {
        for c in self.c1.iter_mut() {
            *c = 0.0;
        }
    }

    pub(crate) fn max_abs_slope(&self) -> f64 {
        self.c1.iter().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

/// Why a path node or segment boundary was created. Indices are zero-based:
/// observation indices for residual events, column indices for component
/// events, group indices for group events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTag {
    /// The `R = 0` starting node.
    Init,
    /// A residual crossed zero while increasing `R`.
    ResidualHitsZero(usize),
    /// An active group's shared magnitude reached zero.
    GroupDeactivates(usize),
    /// A non-maximal coefficient caught up with its group's magnitude.
    ComponentReachesGroupMax(usize),
    /// An inactive group's subgradient reached the unit l1 sphere.
    GroupActivates(usize),
    /// A loss subgradient hit its bound, releasing a zero residual.
    ResidualLeavesZero(usize),
    /// A maximal coefficient's subgradient reached zero.
    ComponentLeavesGroupMax(usize),
    /// No further event: the path reached its end.
    Terminal,
}

impl EventTag {
    /// Short form used in printed node tables.
    pub fn label(&self) -> String {
        match self {
            EventTag::Init => "init".to_string(),
            EventTag::ResidualHitsZero(i) => format!("residual_zero({i})"),
            EventTag::GroupDeactivates(k) => format!("group_out({k})"),
            EventTag::ComponentReachesGroupMax(j) => format!("comp_to_max({j})"),
            EventTag::GroupActivates(k) => format!("group_in({k})"),
            EventTag::ResidualLeavesZero(i) => format!("residual_free({i})"),
            EventTag::ComponentLeavesGroupMax(j) => format!("comp_from_max({j})"),
            EventTag::Terminal => "end".to_string(),
        }
    }
}

/// One breakpoint of the solution path: the minimizer `beta` with norm
/// budget `radius`, valid for every `lambda` in `[lambda_lo, lambda_hi]`,
/// together with the subgradient certificates on that interval.
///
/// `u` is affine in `1/lambda`, `w` is affine in `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathNode {
    pub radius: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub u: AffineVector,
    pub w: AffineVector,
    /// The event that created this node (`Init` for the first).
    pub event: EventTag,
    /// The event that ended this node's lambda interval, if any.
    pub exit_event: Option<EventTag>,
}

impl PathNode {
    /// Penalty subgradient at a given lambda (maps `lambda` to `1/lambda`,
    /// with `0` and infinity handled at the range ends).
    pub fn u_at_lambda(&self, lambda: f64) -> Vec<f64> {
        self.u.value(inverse_param(lambda))
    }

    /// Loss subgradient at a given lambda.
    pub fn w_at_lambda(&self, lambda: f64) -> Vec<f64> {
        self.w.value(lambda)
    }

    /// A finite lambda representative of the node's interval: the midpoint,
    /// or twice the lower endpoint when the interval is unbounded.
    pub fn lambda_mid(&self) -> f64 {
        if self.lambda_hi.is_finite() {
            0.5 * (self.lambda_lo + self.lambda_hi)
        } else {
            (2.0 * self.lambda_lo).max(1.0)
        }
    }
}

pub(crate) fn inverse_param(lambda: f64) -> f64 {
    if lambda == 0.0 {
        f64::INFINITY
    } else if lambda.is_infinite() {
        0.0
    } else {
        1.0 / lambda
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// The path reached `lambda = 0` (including full residual saturation).
    LambdaZero,
    /// The configured maximum number of active groups was about to be exceeded.
    MaxActiveGroups,
    /// A user stop rule (maximum radius) fired.
    UserStop,
    /// The solve could not continue; the path up to this point is valid.
    Degenerate { kind: DegeneracyKind, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneracyKind {
    /// Two events coincided within tolerance; jitter the data and retry.
    TieBreak,
    /// A linear system was singular or structurally unbalanced.
    Singular,
    /// No group ever activates: `beta = 0` is optimal for every lambda.
    NoActivation,
}

/// The full piecewise-linear solution path of one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    problem: QuantileProblem,
    nodes: Vec<PathNode>,
    termination: Termination,
    max_slope_defect: f64,
}

impl SolutionPath {
    pub(crate) fn new(
        problem: QuantileProblem,
        nodes: Vec<PathNode>,
        termination: Termination,
        max_slope_defect: f64,
    ) -> Self {
        SolutionPath { problem, nodes, termination, max_slope_defect }
    }

    /// Largest deviation `|d(loss)/dR + lambda|` over all segments, with the
    /// derivative evaluated analytically from each segment's direction. The
    /// loss slope equals `-lambda` exactly on the true path, so this
    /// measures the solver's internal consistency at full precision (a
    /// finite difference of node losses cannot: on short segments it is
    /// dominated by the rounding of the stored endpoints).
    pub fn max_slope_defect(&self) -> f64 {
        self.max_slope_defect
    }

    /// Reassembles a path from stored pieces (deserialization). Checks the
    /// ordering invariants but trusts the numeric content; use a KKT pass
    /// to certify it.
    pub fn from_parts(
        problem: QuantileProblem,
        nodes: Vec<PathNode>,
        termination: Termination,
        max_slope_defect: f64,
    ) -> Result<Self, String> {
        if nodes.is_empty() {
            return Err("a path needs at least one node".to_string());
        }
        for (t, node) in nodes.iter().enumerate() {
            if node.beta.len() != problem.n_cols() || node.residuals.len() != problem.n_obs() {
                return Err(format!("node {t} has mismatched dimensions"));
            }
            if t > 0 && nodes[t - 1].radius >= node.radius {
                return Err(format!("node radii must increase strictly at node {t}"));
            }
        }
        Ok(SolutionPath { problem, nodes, termination, max_slope_defect })
    }

    pub fn problem(&self) -> &QuantileProblem {
        &self.problem
    }

    pub fn nodes(&self) -> &[PathNode] {
        &self.nodes
    }

    pub fn termination(&self) -> &Termination {
        &self.termination
    }

    pub fn last_radius(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.radius)
    }

    /// The decreasing sequence of lambda breakpoints: each interior node
    /// boundary, i.e. `lambda_lo` of every node except the last.
    pub fn lambda_breakpoints(&self) -> Vec<f64> {
        let n = self.nodes.len();
        self.nodes[..n.saturating_sub(1)].iter().map(|nd| nd.lambda_lo).collect()
    }

    /// Flattened event sequence starting from the first breakpoint node:
    /// creation and interval-exit events interleaved, mirroring a printed
    /// node table read top to bottom.
    pub fn event_sequence(&self) -> Vec<EventTag> {
        let mut out = Vec::new();
        for node in self.nodes.iter().skip(1) {
            out.push(node.event);
            if let Some(exit) = node.exit_event {
                out.push(exit);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_vector_evaluates_and_guards_infinity() {
        let f = AffineVector::new(vec![1.0, 2.0], vec![0.5, 0.0], 0.0, f64::INFINITY);
        assert_eq!(f.value(2.0), vec![2.0, 2.0]);
        let at_inf = f.value(f64::INFINITY);
        assert!(at_inf[0].is_infinite());
        assert_eq!(at_inf[1], 2.0);
    }

    #[test]
    #[should_panic(expected = "empty parameter range")]
    fn affine_vector_rejects_empty_range() {
        let _ = AffineVector::new(vec![0.0], vec![0.0], 1.0, 0.0);
    }

    #[test]
    fn inverse_param_handles_ends() {
        assert_eq!(inverse_param(0.0), f64::INFINITY);
        assert_eq!(inverse_param(f64::INFINITY), 0.0);
        assert_eq!(inverse_param(4.0), 0.25);
    }
}
