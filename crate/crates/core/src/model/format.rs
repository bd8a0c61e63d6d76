//! The `.furn.json` document format.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ConnectorRef, Connector, ConvexShape, FurnitureModel, Part, ShapeGeometry, FORMAT_VERSION,
};
use crate::assembly::AlignmentThresholds;
use crate::geom::{quat_norm, quat_normalize, Pose, Vec3};

/// Where in a document a problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    LineColumn { line: usize, column: usize },
    Path(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::LineColumn { line, column } => write!(f, "{line}:{column}"),
            Location::Path(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    /// Unknown or missing field, or a value of the wrong type.
    #[error("schema error at {line}:{column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("duplicate id `{id}` at {path}")]
    DuplicateId { path: String, id: String },
    #[error("invalid value at {path}: {message}")]
    InvalidValue { path: String, message: String },
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: i64 },
}

impl ModelError {
    pub fn location(&self) -> Location {
        match self {
            ModelError::Syntax { line, column, .. } | ModelError::Schema { line, column, .. } => {
                Location::LineColumn { line: *line, column: *column }
            }
            ModelError::DuplicateId { path, .. } | ModelError::InvalidValue { path, .. } => {
                Location::Path(path.clone())
            }
            ModelError::UnsupportedVersion { .. } => Location::Path("version".into()),
        }
    }

    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Syntax { .. } => "syntax",
            ModelError::Schema { .. } => "schema",
            ModelError::DuplicateId { .. } => "duplicate_id",
            ModelError::InvalidValue { .. } => "invalid_value",
            ModelError::UnsupportedVersion { .. } => "unsupported_version",
        }
    }

    fn from_json(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let line = e.line().max(1);
        let column = e.column().max(1);
        // serde_json appends " at line L column C"; the location is kept separately.
        let full = e.to_string();
        let message = match full.rfind(" at line ") {
            Some(i) => full[..i].to_string(),
            None => full,
        };
        match e.classify() {
            Category::Data => ModelError::Schema { line, column, message },
            _ => ModelError::Syntax { line, column, message },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    version: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thresholds: Option<ThresholdsDoc>,
    parts: Vec<PartDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forward: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartDoc {
    id: String,
    shapes: Vec<ShapeDoc>,
    #[serde(default)]
    connectors: Vec<ConnectorDoc>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ShapeKind {
    Box,
    Sphere,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeDoc {
    kind: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_extents: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default)]
    pos: [f64; 3],
    #[serde(default = "identity_quat")]
    quat: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectorDoc {
    id: String,
    size: f64,
    #[serde(default)]
    pos: [f64; 3],
    #[serde(default = "identity_quat")]
    quat: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mate: Option<String>,
    #[serde(default = "one")]
    symmetry_order: u32,
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn one() -> u32 {
    1
}

fn resolve_pose(pos: [f64; 3], quat: [f64; 4], path: &str) -> Result<(Pose, f64), ModelError> {
    let rot = quat_normalize(quat).map_err(|_| ModelError::InvalidValue {
        path: format!("{path}.quat"),
        message: "quaternion has zero norm".into(),
    })?;
    Ok((Pose::new(Vec3::from(pos), rot), quat_norm(quat)))
}

/// Parses a `.furn.json` document into a resolved model.
///
/// Quaternions are normalized; structural checks that do not prevent
/// resolution are left to [`super::validate_model`].
pub fn parse_model(text: &[u8]) -> Result<FurnitureModel, ModelError> {
    let doc: ModelDoc = serde_json::from_slice(text).map_err(ModelError::from_json)?;
    if doc.version != i64::from(FORMAT_VERSION) {
        return Err(ModelError::UnsupportedVersion { found: doc.version });
    }

    let thresholds = doc.thresholds.map(|t| {
        let d = AlignmentThresholds::default();
        AlignmentThresholds {
            epsilon_distance: t.distance.unwrap_or(d.epsilon_distance),
            epsilon_up: t.up.unwrap_or(d.epsilon_up),
            epsilon_forward: t.forward.unwrap_or(d.epsilon_forward),
        }
    });

    let mut part_ids = BTreeSet::new();
    let mut parts = Vec::with_capacity(doc.parts.len());
    for (pi, pd) in doc.parts.into_iter().enumerate() {
        let ppath = format!("parts[{pi}]");
        if !part_ids.insert(pd.id.clone()) {
            return Err(ModelError::DuplicateId { path: format!("{ppath}.id"), id: pd.id });
        }

        let mut shapes = Vec::with_capacity(pd.shapes.len());
        for (si, sd) in pd.shapes.into_iter().enumerate() {
            let spath = format!("{ppath}.shapes[{si}]");
            let geometry = match (sd.kind, sd.half_extents, sd.radius) {
                (ShapeKind::Box, Some(h), None) => ShapeGeometry::Box { half_extents: Vec3::from(h) },
                (ShapeKind::Sphere, None, Some(r)) => ShapeGeometry::Sphere { radius: r },
                (ShapeKind::Box, _, _) => {
                    return Err(ModelError::InvalidValue {
                        path: spath,
                        message: "box shapes take `half_extents` and no `radius`".into(),
                    })
                }
                (ShapeKind::Sphere, _, _) => {
                    return Err(ModelError::InvalidValue {
                        path: spath,
                        message: "sphere shapes take `radius` and no `half_extents`".into(),
                    })
                }
            };
            let (offset, declared_quat_norm) = resolve_pose(sd.pos, sd.quat, &spath)?;
            shapes.push(ConvexShape { geometry, offset, declared_quat_norm });
        }

        let mut conn_ids = BTreeSet::new();
        let mut connectors = Vec::with_capacity(pd.connectors.len());
        for (ci, cd) in pd.connectors.into_iter().enumerate() {
            let cpath = format!("{ppath}.connectors[{ci}]");
            if !conn_ids.insert(cd.id.clone()) {
                return Err(ModelError::DuplicateId { path: format!("{cpath}.id"), id: cd.id });
            }
            let mate = match cd.mate {
                None => None,
                Some(s) => Some(s.parse::<ConnectorRef>().map_err(|e| ModelError::InvalidValue {
                    path: format!("{cpath}.mate"),
                    message: e.to_string(),
                })?),
            };
            let (local, declared_quat_norm) = resolve_pose(cd.pos, cd.quat, &cpath)?;
            connectors.push(Connector {
                id: cd.id,
                size: cd.size,
                local,
                mate,
                symmetry_order: cd.symmetry_order,
                declared_quat_norm,
            });
        }

        parts.push(Part { id: pd.id, shapes, connectors });
    }

    Ok(FurnitureModel { name: doc.name, version: FORMAT_VERSION, thresholds, parts })
}

/// Serializes a model back to the document format (pretty-printed).
pub fn to_json(m: &FurnitureModel) -> String {
    let doc = ModelDoc {
        name: m.name.clone(),
        version: i64::from(m.version),
        thresholds: m.thresholds.map(|t| ThresholdsDoc {
            distance: Some(t.epsilon_distance),
            up: Some(t.epsilon_up),
            forward: Some(t.epsilon_forward),
        }),
        parts: m
            .parts
            .iter()
            .map(|p| PartDoc {
                id: p.id.clone(),
                shapes: p
                    .shapes
                    .iter()
                    .map(|s| {
                        let (kind, half_extents, radius) = match s.geometry {
                            ShapeGeometry::Box { half_extents } => {
                                (ShapeKind::Box, Some(half_extents.to_array()), None)
                            }
                            ShapeGeometry::Sphere { radius } => (ShapeKind::Sphere, None, Some(radius)),
                        };
                        ShapeDoc {
                            kind,
                            half_extents,
                            radius,
                            pos: s.offset.pos.to_array(),
                            quat: s.offset.rot.to_array(),
                        }
                    })
                    .collect(),
                connectors: p
                    .connectors
                    .iter()
                    .map(|c| ConnectorDoc {
                        id: c.id.clone(),
                        size: c.size,
                        pos: c.local.pos.to_array(),
                        quat: c.local.rot.to_array(),
                        mate: c.mate.as_ref().map(ToString::to_string),
                        symmetry_order: c.symmetry_order,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}
