//! The on-disk path document: a JSON file carrying the full problem data,
//! every node of the solution path, and the provenance needed to reproduce
//! and re-verify a fit without the original inputs.
//!
//! Numbers are written as plain JSON numbers with shortest-round-trip
//! formatting, so reading a document back reproduces every `f64`
//! bit-for-bit. Infinite interval endpoints are encoded as `null`.

use serde::{Deserialize, Serialize};

use quantpath::ingest::Standardization;
use quantpath::mat::Mat;
use quantpath::multiresponse::StackedLayout;
use quantpath::path::{AffineVector, DegeneracyKind, EventTag, PathNode, SolutionPath, Termination};
use quantpath::problem::QuantileProblem;

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct PathDocument {
    pub version: u32,
    pub problem: ProblemDoc,
    pub metadata: Metadata,
    pub termination: TerminationDoc,
    pub max_slope_defect: f64,
    pub nodes: Vec<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub groups: Vec<Vec<usize>>,
    /// Row-major design matrix.
    pub design: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    /// FNV-1a hash of the design and response bit patterns.
    pub checksum: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub column_names: Vec<String>,
    pub group_names: Vec<String>,
    /// Per design column, when the source variable was standardized.
    pub standardization: Vec<Option<StdDoc>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub response_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub response_standardization: Option<StdDoc>,
    /// Present for stacked multi-response fits.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub layout: Option<LayoutDoc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub responses: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jitter: Option<JitterDoc>,
    pub solver: SolverDoc,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StdDoc {
    pub center: f64,
    pub scale: f64,
}

impl From<Standardization> for StdDoc {
    fn from(s: Standardization) -> Self {
        StdDoc { center: s.center, scale: s.scale }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl From<StackedLayout> for LayoutDoc {
    fn from(l: StackedLayout) -> Self {
        LayoutDoc { n: l.n, m: l.m, p: l.p }
    }
}

impl From<LayoutDoc> for StackedLayout {
    fn from(l: LayoutDoc) -> Self {
        StackedLayout { n: l.n, m: l.m, p: l.p }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JitterDoc {
    pub magnitude: f64,
    pub seed: u64,
}

/// The solver configuration the document was produced with.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SolverDoc {
    pub tau: f64,
    pub intercept: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_active_groups: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_radius: Option<f64>,
    pub tie_tol: f64,
    pub strict_margin: f64,
    pub pivot_tol: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationDoc {
    LambdaZero,
    MaxActiveGroups,
    UserStop,
    Degenerate { kind: String, detail: String },
}

impl From<&Termination> for TerminationDoc {
    fn from(t: &Termination) -> Self {
        match t {
            Termination::LambdaZero => TerminationDoc::LambdaZero,
            Termination::MaxActiveGroups => TerminationDoc::MaxActiveGroups,
            Termination::UserStop => TerminationDoc::UserStop,
            Termination::Degenerate { kind, detail } => TerminationDoc::Degenerate {
                kind: match kind {
                    DegeneracyKind::TieBreak => "tie_break".to_string(),
                    DegeneracyKind::Singular => "singular".to_string(),
                    DegeneracyKind::NoActivation => "no_activation".to_string(),
                },
                detail: detail.clone(),
            },
        }
    }
}

impl TryFrom<&TerminationDoc> for Termination {
    type Error = String;

    fn try_from(t: &TerminationDoc) -> Result<Self, String> {
        Ok(match t {
            TerminationDoc::LambdaZero => Termination::LambdaZero,
            TerminationDoc::MaxActiveGroups => Termination::MaxActiveGroups,
            TerminationDoc::UserStop => Termination::UserStop,
            TerminationDoc::Degenerate { kind, detail } => Termination::Degenerate {
                kind: match kind.as_str() {
                    "tie_break" => DegeneracyKind::TieBreak,
                    "singular" => DegeneracyKind::Singular,
                    "no_activation" => DegeneracyKind::NoActivation,
                    other => return Err(format!("unknown degeneracy kind {other:?}")),
                },
                detail: detail.clone(),
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventDoc {
    Init,
    ResidualHitsZero(usize),
    GroupDeactivates(usize),
    ComponentReachesGroupMax(usize),
    GroupActivates(usize),
    ResidualLeavesZero(usize),
    ComponentLeavesGroupMax(usize),
    Terminal,
}

impl From<EventTag> for EventDoc {
    fn from(e: EventTag) -> Self {
        match e {
            EventTag::Init => EventDoc::Init,
            EventTag::ResidualHitsZero(i) => EventDoc::ResidualHitsZero(i),
            EventTag::GroupDeactivates(k) => EventDoc::GroupDeactivates(k),
            EventTag::ComponentReachesGroupMax(j) => EventDoc::ComponentReachesGroupMax(j),
            EventTag::GroupActivates(k) => EventDoc::GroupActivates(k),
            EventTag::ResidualLeavesZero(i) => EventDoc::ResidualLeavesZero(i),
            EventTag::ComponentLeavesGroupMax(j) => EventDoc::ComponentLeavesGroupMax(j),
            EventTag::Terminal => EventDoc::Terminal,
        }
    }
}

impl From<&EventDoc> for EventTag {
    fn from(e: &EventDoc) -> Self {
        match e {
            EventDoc::Init => EventTag::Init,
            EventDoc::ResidualHitsZero(i) => EventTag::ResidualHitsZero(*i),
            EventDoc::GroupDeactivates(k) => EventTag::GroupDeactivates(*k),
            EventDoc::ComponentReachesGroupMax(j) => EventTag::ComponentReachesGroupMax(*j),
            EventDoc::GroupActivates(k) => EventTag::GroupActivates(*k),
            EventDoc::ResidualLeavesZero(i) => EventTag::ResidualLeavesZero(*i),
            EventDoc::ComponentLeavesGroupMax(j) => EventTag::ComponentLeavesGroupMax(*j),
            EventDoc::Terminal => EventTag::Terminal,
        }
    }
}

/// A vector-valued affine segment; `hi = null` encodes an unbounded range.
#[derive(Debug, Serialize, Deserialize)]
pub struct AffineDoc {
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
    pub lo: f64,
    pub hi: Option<f64>,
}

impl From<&AffineVector> for AffineDoc {
    fn from(f: &AffineVector) -> Self {
        let (lo, hi) = f.range();
        AffineDoc {
            c0: f.constant_part().to_vec(),
            c1: f.linear_part().to_vec(),
            lo,
            hi: hi.is_finite().then_some(hi),
        }
    }
}

impl From<&AffineDoc> for AffineVector {
    fn from(d: &AffineDoc) -> Self {
        AffineVector::new(d.c0.clone(), d.c1.clone(), d.lo, d.hi.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeDoc {
    pub radius: f64,
    pub lambda_lo: f64,
    /// `null` encodes an unbounded upper endpoint.
    pub lambda_hi: Option<f64>,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub u: AffineDoc,
    pub w: AffineDoc,
    pub event: EventDoc,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exit_event: Option<EventDoc>,
}

/// FNV-1a over the bit patterns of the design and response.
pub fn data_checksum(design: &Mat, response: &[f64]) -> String {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |v: f64| {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for row in design.rows() {
        for &v in row {
            eat(v);
        }
    }
    for &v in response {
        eat(v);
    }
    format!("fnv1a:{h:016x}")
}

impl PathDocument {
    pub fn from_path(path: &SolutionPath, metadata: Metadata) -> Self {
        let problem = path.problem();
        let design = problem.design();
        let nodes = path
            .nodes()
            .iter()
            .map(|node| NodeDoc {
                radius: node.radius,
                lambda_lo: node.lambda_lo,
                lambda_hi: node.lambda_hi.is_finite().then_some(node.lambda_hi),
                beta: node.beta.clone(),
                residuals: node.residuals.clone(),
                u: (&node.u).into(),
                w: (&node.w).into(),
                event: node.event.into(),
                exit_event: node.exit_event.map(EventDoc::from),
            })
            .collect();
        PathDocument {
            version: DOCUMENT_VERSION,
            problem: ProblemDoc {
                n: problem.n_obs(),
                m: problem.n_cols(),
                tau: problem.tau(),
                groups: problem.groups().to_vec(),
                design: design.rows().map(<[f64]>::to_vec).collect(),
                response: problem.response().to_vec(),
                checksum: data_checksum(design, problem.response()),
            },
            metadata,
            termination: path.termination().into(),
            max_slope_defect: path.max_slope_defect(),
            nodes,
        }
    }

    pub fn to_path(&self) -> Result<SolutionPath, String> {
        if self.version != DOCUMENT_VERSION {
            return Err(format!("unsupported document version {}", self.version));
        }
        let design = Mat::from_rows(&self.problem.design);
        let expected = data_checksum(&design, &self.problem.response);
        if expected != self.problem.checksum {
            return Err(format!(
                "data checksum mismatch: stored {}, computed {expected}",
                self.problem.checksum
            ));
        }
        let problem = QuantileProblem::new(
            design,
            self.problem.response.clone(),
            self.problem.tau,
            self.problem.groups.clone(),
        )
        .map_err(|e| e.to_string())?;
        let nodes: Vec<PathNode> = self
            .nodes
            .iter()
            .map(|d| PathNode {
                radius: d.radius,
                lambda_lo: d.lambda_lo,
                lambda_hi: d.lambda_hi.unwrap_or(f64::INFINITY),
                beta: d.beta.clone(),
                residuals: d.residuals.clone(),
                u: (&d.u).into(),
                w: (&d.w).into(),
                event: (&d.event).into(),
                exit_event: d.exit_event.as_ref().map(EventTag::from),
            })
            .collect();
        let termination = Termination::try_from(&self.termination)?;
        SolutionPath::from_parts(problem, nodes, termination, self.max_slope_defect)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), String> {
        let json = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        std::fs::write(path, json).map_err(|e| format!("cannot write {}: {e}", path.display()))
    }

    pub fn read(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("corrupt document: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use quantpath::homotopy::{solve_path, SolverOptions, StopRule};

    fn demo_path() -> SolutionPath {
        let x = Mat::from_rows(&[
            vec![-4.0, 3.0, 5.0],
            vec![-4.0, 5.0, 1.0],
            vec![4.0, -3.0, 0.0],
        ]);
        let problem =
            QuantileProblem::new(x, vec![8.0, 7.0, -11.0], 0.5, vec![vec![0], vec![1, 2]]).unwrap();
        solve_path(&problem, &StopRule::default(), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let path = demo_path();
        let doc = PathDocument::from_path(&path, Metadata::default());
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let parsed: PathDocument = serde_json::from_str(&json).unwrap();
        let rebuilt = parsed.to_path().unwrap();

        assert_eq!(rebuilt.problem(), path.problem());
        assert_eq!(rebuilt.termination(), path.termination());
        assert_eq!(rebuilt.nodes().len(), path.nodes().len());
        for (a, b) in path.nodes().iter().zip(rebuilt.nodes()) {
            // Bitwise equality of every stored number.
            assert_eq!(a, b);
        }
    }

    #[test]
    fn checksum_detects_data_edits() {
        let path = demo_path();
        let mut doc = PathDocument::from_path(&path, Metadata::default());
        doc.problem.response[0] += 1e-9;
        assert!(doc.to_path().unwrap_err().contains("checksum"));
    }
}
