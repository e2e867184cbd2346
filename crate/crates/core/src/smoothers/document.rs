//! JSON wire format for smoother families (see `docs/family.schema.md`).

use serde::{Deserialize, Serialize};

use super::SmootherSpec;
use crate::error::{Error, Result};

pub const FAMILY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDocument {
    pub schema_version: u32,
    pub members: Vec<MemberDocument>,
}

impl FamilyDocument {
    pub fn check_version(&self) -> Result<()> {
        if self.schema_version == FAMILY_SCHEMA_VERSION {
            Ok(())
        } else {
            Err(Error::param(
                "schema_version",
                format!(
                    "unsupported family schema {} (expected {FAMILY_SCHEMA_VERSION})",
                    self.schema_version
                ),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    Zero,
    Identity,
    Explicit,
    Projection,
    Krr,
    Knn,
}

/// Constructor parameters; which fields are required depends on the kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl Parameters {
    fn is_empty(&self) -> bool {
        *self == Parameters::default()
    }

    fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.n.is_some() {
            out.push("n");
        }
        if self.design.is_some() {
            out.push("design");
        }
        if self.subset.is_some() {
            out.push("subset");
        }
        if self.gram.is_some() {
            out.push("gram");
        }
        if self.lambda.is_some() {
            out.push("lambda");
        }
        if self.points.is_some() {
            out.push("points");
        }
        if self.k.is_some() {
            out.push("k");
        }
        out
    }
}

/// One family member: `{label, kind, parameters, matrix}`. `matrix` is a
/// row-major nested array and is used only by the `explicit` kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberDocument {
    pub label: String,
    pub kind: SmootherKind,
    #[serde(default, skip_serializing_if = "Parameters::is_empty")]
    pub parameters: Parameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl MemberDocument {
    pub fn from_spec(label: String, spec: &SmootherSpec) -> Self {
        let mut parameters = Parameters::default();
        let mut matrix = None;
        let kind = match spec {
            SmootherSpec::Zero { n } => {
                parameters.n = Some(*n);
                SmootherKind::Zero
            }
            SmootherSpec::Identity { n } => {
                parameters.n = Some(*n);
                SmootherKind::Identity
            }
            SmootherSpec::Explicit { matrix: m } => {
                matrix = Some(m.clone());
                SmootherKind::Explicit
            }
            SmootherSpec::Projection { design, subset } => {
                parameters.design = Some(design.clone());
                parameters.subset = Some(subset.clone());
                SmootherKind::Projection
            }
            SmootherSpec::Krr { gram, lambda } => {
                parameters.gram = Some(gram.clone());
                parameters.lambda = Some(*lambda);
                SmootherKind::Krr
            }
            SmootherSpec::Knn { points, k } => {
                parameters.points = Some(points.clone());
                parameters.k = Some(*k);
                SmootherKind::Knn
            }
        };
        MemberDocument {
            label,
            kind,
            parameters,
            matrix,
        }
    }

    /// Validates that exactly the fields the kind needs are present.
    pub fn to_spec(&self) -> Result<SmootherSpec> {
        let p = &self.parameters;
        let allowed: &[&str] = match self.kind {
            SmootherKind::Zero | SmootherKind::Identity => &["n"],
            SmootherKind::Explicit => &[],
            SmootherKind::Projection => &["design", "subset"],
            SmootherKind::Krr => &["gram", "lambda"],
            SmootherKind::Knn => &["points", "k"],
        };
        if let Some(extra) = p.present().into_iter().find(|f| !allowed.contains(f)) {
            return Err(Error::param(
                "parameters",
                format!("member `{}`: field `{extra}` does not apply to {:?}", self.label, self.kind),
            ));
        }
        if self.matrix.is_some() != (self.kind == SmootherKind::Explicit) {
            return Err(Error::param(
                "matrix",
                format!("member `{}`: `matrix` is required for, and only for, kind explicit", self.label),
            ));
        }
        let need = |field: &'static str| {
            Error::param(
                "parameters",
                format!("member `{}` needs `{field}`", self.label),
            )
        };
        Ok(match self.kind {
            SmootherKind::Zero => SmootherSpec::Zero {
                n: p.n.ok_or_else(|| need("n"))?,
            },
            SmootherKind::Identity => SmootherSpec::Identity {
                n: p.n.ok_or_else(|| need("n"))?,
            },
            SmootherKind::Explicit => SmootherSpec::Explicit {
                matrix: self.matrix.clone().expect("checked above"),
            },
            SmootherKind::Projection => SmootherSpec::Projection {
                design: p.design.clone().ok_or_else(|| need("design"))?,
                subset: p.subset.clone().ok_or_else(|| need("subset"))?,
            },
            SmootherKind::Krr => SmootherSpec::Krr {
                gram: p.gram.clone().ok_or_else(|| need("gram"))?,
                lambda: p.lambda.ok_or_else(|| need("lambda"))?,
            },
            SmootherKind::Knn => SmootherSpec::Knn {
                points: p.points.clone().ok_or_else(|| need("points"))?,
                k: p.k.ok_or_else(|| need("k"))?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let doc: FamilyDocument = serde_json::from_str(
            r#"{
              "schema_version": 1,
              "members": [
                {"label": "a", "kind": "zero", "parameters": {"n": 2}},
                {"label": "b", "kind": "explicit", "matrix": [[1, 0], [0, 1]]},
                {"label": "k", "kind": "krr", "parameters": {"gram": [[2, 0], [0, 1]], "lambda": 1}}
              ]
            }"#,
        )
        .unwrap();
        assert_eq!(doc.members.len(), 3);
        assert_eq!(doc.members[1].to_spec().unwrap(), SmootherSpec::Explicit {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        });
    }

    #[test]
    fn rejects_malformed_members() {
        let unknown = r#"{"label": "a", "kind": "zero", "parameters": {"n": 2, "bogus": 1}}"#;
        assert!(serde_json::from_str::<MemberDocument>(unknown).is_err());

        let missing: MemberDocument =
            serde_json::from_str(r#"{"label": "a", "kind": "knn", "parameters": {"k": 2}}"#).unwrap();
        assert!(missing.to_spec().is_err());

        let misplaced: MemberDocument = serde_json::from_str(
            r#"{"label": "a", "kind": "zero", "parameters": {"n": 2, "k": 1}}"#,
        )
        .unwrap();
        assert!(misplaced.to_spec().is_err());

        let stray_matrix: MemberDocument =
            serde_json::from_str(r#"{"label": "a", "kind": "identity", "parameters": {"n": 1}, "matrix": [[1]]}"#)
                .unwrap();
        assert!(stray_matrix.to_spec().is_err());

        let doc = FamilyDocument {
            schema_version: 7,
            members: vec![],
        };
        assert!(doc.check_version().is_err());
    }
}
