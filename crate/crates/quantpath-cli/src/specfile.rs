//! The JSON column-spec format consumed by `fit` and `stack`.
//!
//! ```json
//! {
//!   "columns": [
//!     {"name": "age", "kind": "quantitative",
//!      "transforms": ["standardize", {"polynomial": 2}]},
//!     {"name": "race",
//!      "kind": {"categorical": {"levels": ["black", "white", "other"],
//!                                "reference": "other"}},
//!      "transforms": ["dummy_code"]},
//!     {"name": "smoke", "kind": "quantitative", "group": "habits"},
//!     {"name": "bwt", "kind": "response"}
//!   ]
//! }
//! ```
//!
//! Dummy columns of one factor always share a group, as do the power
//! columns of one polynomial expansion; an explicit `group` label merges
//! columns across specs. The `reference` level defaults to the last listed
//! level.

use serde::Deserialize;

use quantpath::ingest::{ColumnKind, ColumnSpec, Transform};

#[derive(Debug, Deserialize)]
pub struct SpecFile {
    pub columns: Vec<ColumnDoc>,
}

#[derive(Debug, Deserialize)]
pub struct ColumnDoc {
    pub name: String,
    pub kind: KindDoc,
    #[serde(default)]
    pub transforms: Vec<TransformDoc>,
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindDoc {
    Quantitative,
    Response,
    Categorical { levels: Vec<String>, #[serde(default)] reference: Option<String> },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformDoc {
    Standardize,
    DummyCode,
    Polynomial(u32),
}

impl From<TransformDoc> for Transform {
    fn from(t: TransformDoc) -> Self {
        match t {
            TransformDoc::Standardize => Transform::Standardize,
            TransformDoc::DummyCode => Transform::DummyCode,
            TransformDoc::Polynomial(d) => Transform::Polynomial(d),
        }
    }
}

pub fn load_specs(path: &std::path::Path) -> Result<Vec<ColumnSpec>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: SpecFile =
        serde_json::from_str(&text).map_err(|e| format!("bad spec file {}: {e}", path.display()))?;
    Ok(file
        .columns
        .into_iter()
        .map(|c| ColumnSpec {
            name: c.name,
            kind: match c.kind {
                KindDoc::Quantitative => ColumnKind::Quantitative,
                KindDoc::Response => ColumnKind::Response,
                KindDoc::Categorical { levels, reference } => {
                    ColumnKind::Categorical { levels, reference }
                }
            },
            transforms: c.transforms.into_iter().map(Transform::from).collect(),
            group: c.group,
        })
        .collect())
}
