//! Furniture models: parts made of convex primitives, typed connectors, and
//! the mating table that defines the goal assembly.

mod catalog;
mod format;
mod validate;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::AlignmentThresholds;
use crate::geom::{pose_compose, pose_inverse, Pose, Vec3};

pub use catalog::{
    bundled_model, bundled_source, list_bundled_models, resolve_model, CatalogError, ModelSummary,
    MODEL_FILE_EXTENSION, MODEL_PATH_ENV,
};
pub use format::{parse_model, to_json, Location, ModelError};
pub use validate::{validate_model, Diagnostic, Diagnostics, QUAT_NORM_TOLERANCE};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeGeometry {
    Box { half_extents: Vec3 },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexShape {
    pub geometry: ShapeGeometry,
    /// Placement relative to the part frame.
    pub offset: Pose,
    pub(crate) declared_quat_norm: f64,
}

impl ConvexShape {
    pub fn new(geometry: ShapeGeometry, offset: Pose) -> Self {
        Self { geometry, offset, declared_quat_norm: 1.0 }
    }

    /// Radius of a sphere around the part origin enclosing this shape.
    pub fn bounding_radius(&self) -> f64 {
        let extent = match self.geometry {
            ShapeGeometry::Box { half_extents } => half_extents.norm(),
            ShapeGeometry::Sphere { radius } => radius,
        };
        self.offset.pos.norm() + extent
    }
}

/// Reference to a connector as `part.connector`.
///
/// Ordering is by the qualified string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConnectorRef {
    qualified: String,
    dot: usize,
}

impl ConnectorRef {
    pub fn new(part: &str, connector: &str) -> Self {
        Self { qualified: format!("{part}.{connector}"), dot: part.len() }
    }

    pub fn part(&self) -> &str {
        &self.qualified[..self.dot]
    }

    pub fn connector(&self) -> &str {
        &self.qualified[self.dot + 1..]
    }

    pub fn as_str(&self) -> &str {
        &self.qualified
    }
}

impl Ord for ConnectorRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.qualified.cmp(&other.qualified)
    }
}

impl PartialOrd for ConnectorRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ConnectorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.qualified)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed connector reference `{0}` (expected `part.connector`)")]
pub struct BadConnectorRef(pub String);

impl FromStr for ConnectorRef {
    type Err = BadConnectorRef;

    /// Splits at the first `.`; part ids never contain one.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.find('.') {
            Some(dot) if dot > 0 && dot + 1 < s.len() => {
                Ok(Self { qualified: s.to_string(), dot })
            }
            _ => Err(BadConnectorRef(s.to_string())),
        }
    }
}

impl Serialize for ConnectorRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.qualified)
    }
}

impl<'de> Deserialize<'de> for ConnectorRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connector {
    pub id: String,
    /// Nominal size in meters. Display and diagnostics only.
    pub size: f64,
    pub local: Pose,
    pub mate: Option<ConnectorRef>,
    /// N-fold rotational symmetry about the connector's up axis.
    pub symmetry_order: u32,
    pub(crate) declared_quat_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub id: String,
    pub shapes: Vec<ConvexShape>,
    pub connectors: Vec<Connector>,
}

impl Part {
    pub fn connector(&self, id: &str) -> Option<&Connector> {
        self.connectors.iter().find(|c| c.id == id)
    }

    pub fn bounding_radius(&self) -> f64 {
        self.shapes.iter().map(ConvexShape::bounding_radius).fold(0.0, f64::max)
    }
}

/// An unordered pair of mated connectors, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatePair {
    pub a: ConnectorRef,
    pub b: ConnectorRef,
}

impl MatePair {
    pub fn new(x: ConnectorRef, y: ConnectorRef) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }

    /// Wire identifier `a|b`.
    pub fn id(&self) -> String {
        format!("{}|{}", self.a, self.b)
    }

    pub fn parse_id(s: &str) -> Option<Self> {
        let (a, b) = s.split_once('|')?;
        Some(Self::new(a.parse().ok()?, b.parse().ok()?))
    }

    pub fn involves_part(&self, part: &str) -> bool {
        self.a.part() == part || self.b.part() == part
    }
}

impl fmt::Display for MatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.a, self.b)
    }
}

impl Serialize for MatePair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("unknown connector `{0}`")]
    UnknownConnector(String),
    #[error("`{0}` and `{1}` are not mates")]
    NotMates(String, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FurnitureModel {
    pub name: String,
    pub version: u32,
    /// Per-model override of the alignment thresholds.
    pub thresholds: Option<AlignmentThresholds>,
    pub parts: Vec<Part>,
}

impl FurnitureModel {
    pub fn part(&self, id: &str) -> Option<&Part> {
        self.parts.iter().find(|p| p.id == id)
    }

    pub fn connector(&self, r: &ConnectorRef) -> Option<&Connector> {
        self.part(r.part())?.connector(r.connector())
    }

    /// Sorted part ids.
    pub fn part_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.parts.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    pub fn connector_count(&self) -> usize {
        self.parts.iter().map(|p| p.connectors.len()).sum()
    }

    /// Every mutually declared mate pair, sorted. Non-involutive declarations
    /// are skipped (validation reports them).
    pub fn mate_pairs(&self) -> Vec<MatePair> {
        let mut out = Vec::new();
        for part in &self.parts {
            for c in &part.connectors {
                let me = ConnectorRef::new(&part.id, &c.id);
                let Some(other) = &c.mate else { continue };
                if *other <= me || other.part() == part.id {
                    continue;
                }
                let back = self.connector(other).and_then(|o| o.mate.as_ref());
                if back == Some(&me) {
                    out.push(MatePair::new(me, other.clone()));
                }
            }
        }
        out.sort();
        out
    }

    /// Mate pairs whose two parts are both in `parts`.
    pub fn mate_pairs_within(&self, parts: &[&str]) -> Vec<MatePair> {
        self.mate_pairs()
            .into_iter()
            .filter(|p| parts.contains(&p.a.part()) && parts.contains(&p.b.part()))
            .collect()
    }

    /// Effective symmetry order of a pair: the smaller of the two declarations.
    pub fn pair_symmetry(&self, pair: &MatePair) -> u32 {
        let a = self.connector(&pair.a).map_or(1, |c| c.symmetry_order);
        let b = self.connector(&pair.b).map_or(1, |c| c.symmetry_order);
        a.min(b).max(1)
    }
}

/// Pose of `b`'s part in `a`'s part frame when the two connector frames
/// coincide.
pub fn goal_relative_pose(
    m: &FurnitureModel,
    a: &ConnectorRef,
    b: &ConnectorRef,
) -> Result<Pose, QueryError> {
    let ca = m.connector(a).ok_or_else(|| QueryError::UnknownConnector(a.to_string()))?;
    let cb = m.connector(b).ok_or_else(|| QueryError::UnknownConnector(b.to_string()))?;
    if ca.mate.as_ref() != Some(b) || cb.mate.as_ref() != Some(a) {
        return Err(QueryError::NotMates(a.to_string(), b.to_string()));
    }
    Ok(pose_compose(ca.local, pose_inverse(cb.local)))
}
