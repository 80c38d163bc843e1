//! From tabular data to solvable problems: CSV loading with listwise
//! deletion, dummy coding of categorical variables into shared groups,
//! polynomial expansion groups, centering and scaling, an optional
//! intercept column, and seeded jitter for breaking event ties.
//!
//! CSV input is comma-separated with a header row, UTF-8, `.` decimal
//! separator; missing cells are empty or `NA` and drop the whole row.

use std::collections::BTreeSet;
use std::path::Path;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::mat::Mat;
use crate::multiresponse::{stack_problem, StackError, StackedLayout};
use crate::problem::{ProblemError, QuantileProblem};

/// Column-wise transforms, applied in the fixed order listed here
/// regardless of the order they are requested in: powers are taken of the
/// standardized variable, and dummy coding applies to raw levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Transform {
    Standardize,
    Polynomial(u32),
    DummyCode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Quantitative,
    Categorical {
        /// Observed levels in presentation order.
        levels: Vec<String>,
        /// Level mapped to the all-zero dummy row; the last level if unset.
        reference: Option<String>,
    },
    Response,
}

/// How one raw column enters the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub transforms: Vec<Transform>,
    /// Columns sharing a label form one penalty group; unlabeled predictor
    /// blocks become their own group.
    pub group: Option<String>,
}

impl ColumnSpec {
    pub fn quantitative(name: &str) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Quantitative,
            transforms: Vec::new(),
            group: None,
        }
    }

    pub fn response(name: &str) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Response,
            transforms: Vec::new(),
            group: None,
        }
    }

    pub fn with_transforms(mut self, transforms: &[Transform]) -> Self {
        self.transforms = transforms.to_vec();
        self
    }

    pub fn in_group(mut self, label: &str) -> Self {
        self.group = Some(label.to_string());
        self
    }

    fn validate(&self) -> Result<(), IngestError> {
        let has = |t: fn(&Transform) -> bool| self.transforms.iter().any(t);
        let bad = |detail: String| Err(IngestError::BadSpec { column: self.name.clone(), detail });
        let mut sorted = self.transforms.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.transforms.len() {
            return bad("duplicate transforms".into());
        }
        for t in &self.transforms {
            if let Transform::Polynomial(degree) = t {
                if *degree < 2 {
                    return Err(IngestError::BadDegree { degree: *degree });
                }
            }
        }
        match &self.kind {
            ColumnKind::Categorical { levels, reference } => {
                if levels.len() < 2 {
                    return bad(format!("categorical column needs >= 2 levels, got {}", levels.len()));
                }
                if !has(|t| matches!(t, Transform::DummyCode)) {
                    return bad("categorical columns require the dummy_code transform".into());
                }
                if has(|t| !matches!(t, Transform::DummyCode)) {
                    return bad("categorical columns support only dummy_code".into());
                }
                if let Some(r) = reference {
                    if !levels.contains(r) {
                        return bad(format!("reference level {r:?} not among the levels"));
                    }
                }
            }
            ColumnKind::Response => {
                if self.group.is_some() {
                    return bad("response columns carry no group".into());
                }
                if has(|t| !matches!(t, Transform::Standardize)) {
                    return bad("response columns support only standardize".into());
                }
            }
            ColumnKind::Quantitative => {
                if has(|t| matches!(t, Transform::DummyCode)) {
                    return bad("dummy_code applies to categorical columns".into());
                }
            }
        }
        Ok(())
    }
}

/// Typed column storage.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JitterRecord {
    pub magnitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub source: String,
    pub dropped_rows: usize,
    pub jitter: Option<JitterRecord>,
}

/// A rectangular, fully observed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<ColumnData>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset from typed columns (used for synthetic data).
    pub fn from_columns(names: Vec<String>, columns: Vec<ColumnData>) -> Result<Self, IngestError> {
        assert_eq!(names.len(), columns.len(), "one name per column");
        let n = columns.first().map_or(0, ColumnData::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(IngestError::Ragged);
        }
        Ok(Dataset { names, columns, provenance: Provenance::default() })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, ColumnData::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column {name:?} missing from the header")]
    MissingColumn { name: String },
    #[error("two specs claim column {name:?}")]
    DuplicateSpec { name: String },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("column {column:?} contains unknown level {level:?}")]
    UnknownLevel { column: String, level: String },
    #[error("no data rows (after dropping incomplete rows)")]
    EmptyData,
    #[error("columns have unequal lengths")]
    Ragged,
    #[error("column {column:?} has zero variance; cannot standardize")]
    ZeroVariance { column: String },
    #[error("polynomial degree must be >= 2, got {degree}")]
    BadDegree { degree: u32 },
    #[error("jitter magnitude must be positive")]
    BadMagnitude,
    #[error("column {column:?}: {detail}")]
    BadSpec { column: String, detail: String },
    #[error("column {column:?} is not numeric")]
    NotNumeric { column: String },
    #[error("expected exactly one response column, found {got}")]
    ResponseCount { got: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Stack(#[from] StackError),
}

fn is_missing(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell == "NA"
}

/// Loads the spec'd columns from a CSV file. Header columns without a spec
/// are ignored; rows with a missing cell in any spec'd column are dropped
/// and counted in the provenance.
pub fn load_csv<P: AsRef<Path>>(path: P, specs: &[ColumnSpec]) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    validate_specs(specs)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(specs.len());
    for spec in specs {
        let pos = headers
            .iter()
            .position(|h| h.trim() == spec.name)
            .ok_or_else(|| IngestError::MissingColumn { name: spec.name.clone() })?;
        positions.push(pos);
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); specs.len()];
    let mut dropped_rows = 0usize;
    for record in reader.records() {
        let record = record?;
        if positions.iter().any(|&p| record.get(p).is_none_or(is_missing)) {
            dropped_rows += 1;
            continue;
        }
        for (c, &p) in positions.iter().enumerate() {
            raw[c].push(record.get(p).unwrap().trim().to_string());
        }
    }
    if raw.first().is_none_or(Vec::is_empty) {
        return Err(IngestError::EmptyData);
    }

    let mut columns = Vec::with_capacity(specs.len());
    for (spec, cells) in specs.iter().zip(raw) {
        let data = match &spec.kind {
            ColumnKind::Quantitative | ColumnKind::Response => {
                let mut out = Vec::with_capacity(cells.len());
                for (row, cell) in cells.iter().enumerate() {
                    let v: f64 = cell.parse().map_err(|_| IngestError::Parse {
                        row: row + 2, // 1-based, after the header line
                        column: spec.name.clone(),
                        value: cell.clone(),
                    })?;
                    out.push(v);
                }
                ColumnData::Numeric(out)
            }
            ColumnKind::Categorical { levels, .. } => {
                for cell in &cells {
                    if !levels.iter().any(|l| l == cell) {
                        return Err(IngestError::UnknownLevel {
                            column: spec.name.clone(),
                            level: cell.clone(),
                        });
                    }
                }
                ColumnData::Categorical(cells)
            }
        };
        columns.push(data);
    }

    Ok(Dataset {
        names: specs.iter().map(|s| s.name.clone()).collect(),
        columns,
        provenance: Provenance {
            source: path.display().to_string(),
            dropped_rows,
            jitter: None,
        },
    })
}

fn validate_specs(specs: &[ColumnSpec]) -> Result<(), IngestError> {
    let mut seen = BTreeSet::new();
    for spec in specs {
        spec.validate()?;
        if !seen.insert(spec.name.clone()) {
            return Err(IngestError::DuplicateSpec { name: spec.name.clone() });
        }
    }
    Ok(())
}

/// Expands a categorical column with `L` levels into `L - 1` indicator
/// columns, one per non-reference level in listed order; the reference
/// level maps to all zeros. The resulting columns belong to one group.
pub fn dummy_code(
    values: &[String],
    levels: &[String],
    reference: &str,
) -> Result<Vec<Vec<f64>>, IngestError> {
    if levels.len() < 2 {
        return Err(IngestError::BadSpec {
            column: String::new(),
            detail: format!("dummy coding needs >= 2 levels, got {}", levels.len()),
        });
    }
    if !levels.iter().any(|l| l == reference) {
        return Err(IngestError::UnknownLevel { column: String::new(), level: reference.to_string() });
    }
    for v in values {
        if !levels.iter().any(|l| l == v) {
            return Err(IngestError::UnknownLevel { column: String::new(), level: v.clone() });
        }
    }
    Ok(levels
        .iter()
        .filter(|l| l.as_str() != reference)
        .map(|level| values.iter().map(|v| if v == level { 1.0 } else { 0.0 }).collect())
        .collect())
}

/// Powers `x, x^2, ..., x^degree` of one column; the columns belong to one
/// group.
pub fn polynomial_group(values: &[f64], degree: u32) -> Result<Vec<Vec<f64>>, IngestError> {
    if degree < 2 {
        return Err(IngestError::BadDegree { degree });
    }
    Ok((1..=degree)
        .map(|d| values.iter().map(|v| v.powi(d as i32)).collect())
        .collect())
}

/// Centering and scaling applied to one column, kept for back-mapping
/// coefficients to original units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Centers to mean zero and scales to unit sample standard deviation
/// (divisor `n - 1`).
pub fn standardize(values: &[f64]) -> Result<(Vec<f64>, Standardization), IngestError> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = sample_sd(values, mean);
    if !sd.is_finite() || sd <= 0.0 {
        return Err(IngestError::ZeroVariance { column: String::new() });
    }
    let out = values.iter().map(|v| (v - mean) / sd).collect();
    Ok((out, Standardization { center: mean, scale: sd }))
}

fn uniform_symmetric(rng: &mut ChaCha20Rng, half_width: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (2.0 * unit - 1.0) * half_width
}

/// Adds independent uniform noise in `[-magnitude * sd_c, magnitude * sd_c]`
/// to every cell of every numeric column (`sd_c` is the column's sample
/// standard deviation, or 1 for constant columns). Deterministic in the
/// seed; the seed is recorded in the provenance.
pub fn jitter(dataset: &Dataset, magnitude: f64, seed: u64) -> Result<Dataset, IngestError> {
    jitter_columns(dataset, magnitude, seed, None)
}

/// Like [`jitter`], restricted to the named columns when `only` is given.
pub fn jitter_columns(
    dataset: &Dataset,
    magnitude: f64,
    seed: u64,
    only: Option<&[String]>,
) -> Result<Dataset, IngestError> {
    if magnitude.is_nan() || magnitude <= 0.0 {
        return Err(IngestError::BadMagnitude);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for (name, col) in out.names.clone().iter().zip(out.columns.iter_mut()) {
        if let Some(filter) = only {
            if !filter.contains(name) {
                continue;
            }
        }
        if let ColumnData::Numeric(values) = col {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let sd = sample_sd(values, mean);
            let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
            for v in values.iter_mut() {
                *v += uniform_symmetric(&mut rng, magnitude * scale);
            }
        }
    }
    out.provenance.jitter = Some(JitterRecord { magnitude, seed });
    Ok(out)
}

/// One assembled design column.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltColumn {
    pub name: String,
    /// Group index in the assembled problem.
    pub group: usize,
    /// Present when the source variable was standardized. Power columns of a
    /// standardized variable carry no record of their own.
    pub standardization: Option<Standardization>,
}

/// A problem assembled from a dataset, plus the metadata needed to report
/// coefficients in source terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltProblem {
    pub problem: QuantileProblem,
    pub columns: Vec<BuiltColumn>,
    pub group_names: Vec<String>,
    pub response_name: String,
    pub response_standardization: Option<Standardization>,
}

/// A stacked multi-response problem assembled from a dataset. Groups come
/// from the stacking transform: one group per regressor column.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltStacked {
    pub problem: QuantileProblem,
    pub layout: StackedLayout,
    pub regressors: Vec<BuiltColumn>,
    pub responses: Vec<String>,
    pub response_standardizations: Vec<Option<Standardization>>,
}

struct DesignAccumulator {
    columns: Vec<Vec<f64>>,
    built: Vec<BuiltColumn>,
    group_names: Vec<String>,
    groups: Vec<Vec<usize>>,
}

impl DesignAccumulator {
    fn new() -> Self {
        DesignAccumulator {
            columns: Vec::new(),
            built: Vec::new(),
            group_names: Vec::new(),
            groups: Vec::new(),
        }
    }

    fn group_id(&mut self, label: &str) -> usize {
        match self.group_names.iter().position(|g| g == label) {
            Some(id) => id,
            None => {
                self.group_names.push(label.to_string());
                self.groups.push(Vec::new());
                self.group_names.len() - 1
            }
        }
    }

    fn push(&mut self, name: String, values: Vec<f64>, group_label: &str, std: Option<Standardization>) {
        let gid = self.group_id(group_label);
        let col_idx = self.columns.len();
        self.groups[gid].push(col_idx);
        self.columns.push(values);
        self.built.push(BuiltColumn { name, group: gid, standardization: std });
    }
}

fn numeric_column<'a>(dataset: &'a Dataset, name: &str) -> Result<&'a [f64], IngestError> {
    match dataset.column(name) {
        Some(ColumnData::Numeric(v)) => Ok(v),
        Some(_) => Err(IngestError::NotNumeric { column: name.to_string() }),
        None => Err(IngestError::MissingColumn { name: name.to_string() }),
    }
}

fn expand_predictor(
    dataset: &Dataset,
    spec: &ColumnSpec,
    acc: &mut DesignAccumulator,
) -> Result<(), IngestError> {
    let group_label = spec.group.clone().unwrap_or_else(|| spec.name.clone());
    match &spec.kind {
        ColumnKind::Quantitative => {
            let mut values = numeric_column(dataset, &spec.name)?.to_vec();
            let mut std = None;
            if spec.transforms.contains(&Transform::Standardize) {
                let (v, s) = standardize(&values).map_err(|e| match e {
                    IngestError::ZeroVariance { .. } => {
                        IngestError::ZeroVariance { column: spec.name.clone() }
                    }
                    other => other,
                })?;
                values = v;
                std = Some(s);
            }
            let degree = spec.transforms.iter().find_map(|t| match t {
                Transform::Polynomial(d) => Some(*d),
                _ => None,
            });
            match degree {
                None => acc.push(spec.name.clone(), values, &group_label, std),
                Some(d) => {
                    for (power, col) in polynomial_group(&values, d)?.into_iter().enumerate() {
                        let name = if power == 0 {
                            spec.name.clone()
                        } else {
                            format!("{}^{}", spec.name, power + 1)
                        };
                        let col_std = if power == 0 { std } else { None };
                        acc.push(name, col, &group_label, col_std);
                    }
                }
            }
        }
        ColumnKind::Categorical { levels, reference } => {
            let values = match dataset.column(&spec.name) {
                Some(ColumnData::Categorical(v)) => v,
                Some(_) => return Err(IngestError::NotNumeric { column: spec.name.clone() }),
                None => return Err(IngestError::MissingColumn { name: spec.name.clone() }),
            };
            let reference = reference.clone().unwrap_or_else(|| levels.last().unwrap().clone());
            let coded = dummy_code(values, levels, &reference)?;
            let kept: Vec<&String> = levels.iter().filter(|l| **l != reference).collect();
            for (level, col) in kept.iter().zip(coded) {
                acc.push(format!("{}={}", spec.name, level), col, &group_label, None);
            }
        }
        ColumnKind::Response => unreachable!("responses are filtered before expansion"),
    }
    Ok(())
}

fn build_design(
    dataset: &Dataset,
    specs: &[ColumnSpec],
    intercept: bool,
) -> Result<DesignAccumulator, IngestError> {
    let mut acc = DesignAccumulator::new();
    for spec in specs.iter().filter(|s| s.kind != ColumnKind::Response) {
        expand_predictor(dataset, spec, &mut acc)?;
    }
    if intercept {
        let n = dataset.n_rows();
        acc.push("(intercept)".to_string(), vec![1.0; n], "(intercept)", None);
    }
    Ok(acc)
}

fn extract_response(
    dataset: &Dataset,
    spec: &ColumnSpec,
) -> Result<(Vec<f64>, Option<Standardization>), IngestError> {
    let values = numeric_column(dataset, &spec.name)?.to_vec();
    if spec.transforms.contains(&Transform::Standardize) {
        let (v, s) = standardize(&values).map_err(|e| match e {
            IngestError::ZeroVariance { .. } => IngestError::ZeroVariance { column: spec.name.clone() },
            other => other,
        })?;
        Ok((v, Some(s)))
    } else {
        Ok((values, None))
    }
}

/// Assembles a single-response problem: transforms applied in spec order,
/// an all-ones intercept column appended as its own singleton group when
/// requested, and ungrouped predictors in singleton groups.
pub fn build_problem(
    dataset: &Dataset,
    specs: &[ColumnSpec],
    tau: f64,
    intercept: bool,
) -> Result<BuiltProblem, IngestError> {
    validate_specs(specs)?;
    let responses: Vec<&ColumnSpec> = specs.iter().filter(|s| s.kind == ColumnKind::Response).collect();
    if responses.len() != 1 {
        return Err(IngestError::ResponseCount { got: responses.len() });
    }
    let acc = build_design(dataset, specs, intercept)?;
    let (y, response_standardization) = extract_response(dataset, responses[0])?;
    let x = Mat::from_columns(&acc.columns);
    let problem = QuantileProblem::new(x, y, tau, acc.groups)?;
    Ok(BuiltProblem {
        problem,
        columns: acc.built,
        group_names: acc.group_names,
        response_name: responses[0].name.clone(),
        response_standardization,
    })
}

/// Assembles a stacked problem from every `Response` spec: the design is
/// built once, then replicated block-diagonally with one group per
/// regressor column (any predictor group labels are superseded by the
/// stacking transform).
pub fn build_stacked_problem(
    dataset: &Dataset,
    specs: &[ColumnSpec],
    tau: f64,
    intercept: bool,
) -> Result<BuiltStacked, IngestError> {
    validate_specs(specs)?;
    let responses: Vec<&ColumnSpec> = specs.iter().filter(|s| s.kind == ColumnKind::Response).collect();
    if responses.is_empty() {
        return Err(IngestError::ResponseCount { got: 0 });
    }
    let acc = build_design(dataset, specs, intercept)?;
    let x = Mat::from_columns(&acc.columns);

    let mut y_cols = Vec::with_capacity(responses.len());
    let mut response_standardizations = Vec::with_capacity(responses.len());
    for spec in &responses {
        let (v, s) = extract_response(dataset, spec)?;
        y_cols.push(v);
        response_standardizations.push(s);
    }
    let y = Mat::from_columns(&y_cols);

    let (problem, layout) = stack_problem(&y, &x, tau)?;
    Ok(BuiltStacked {
        problem,
        layout,
        regressors: acc.built,
        responses: responses.iter().map(|s| s.name.clone()).collect(),
        response_standardizations,
    })
}
