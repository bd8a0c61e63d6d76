use std::collections::BTreeSet;

use serde::Serialize;

use super::{ConnectorRef, FurnitureModel, ShapeGeometry};
use crate::geom::Vec3;
use crate::weld::WeldPartition;

/// Allowed deviation of a declared quaternion norm from 1.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: String,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|d| d.code == code)
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|d| d.code == code)
    }

    fn error(&mut self, code: &str, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Diagnostic { code: code.into(), path: path.into(), message: message.into() });
    }

    fn warn(&mut self, code: &str, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Diagnostic { code: code.into(), path: path.into(), message: message.into() });
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(['.', '|']) && !id.chars().any(char::is_whitespace)
}

/// Depth of `p` below the surface of a shape, or `None` when outside.
fn embed_depth(geometry: ShapeGeometry, local: Vec3) -> Option<f64> {
    match geometry {
        ShapeGeometry::Box { half_extents } => {
            let slack = half_extents - local.abs();
            let d = slack.x.min(slack.y).min(slack.z);
            (d > 0.0).then_some(d)
        }
        ShapeGeometry::Sphere { radius } => {
            let d = radius - local.norm();
            (d > 0.0).then_some(d)
        }
    }
}

/// Checks a parsed model for structural problems. Never fails; the findings
/// are the result.
pub fn validate_model(m: &FurnitureModel) -> Diagnostics {
    let mut diag = Diagnostics::default();

    if let Some(t) = m.thresholds {
        if let Err(msg) = t.check() {
            diag.error("invalid_thresholds", "thresholds", msg);
        }
    }
    if m.parts.len() < 2 {
        diag.warn("single_part", "parts", "fewer than two parts; nothing to assemble");
    }

    for (pi, part) in m.parts.iter().enumerate() {
        let ppath = format!("parts[{pi}]");
        if !valid_id(&part.id) {
            diag.error("invalid_id", format!("{ppath}.id"), format!("part id `{}` must be nonempty without `.`, `|` or whitespace", part.id));
        }
        if part.shapes.is_empty() {
            diag.error("no_shapes", format!("{ppath}.shapes"), format!("part `{}` has no shapes", part.id));
        }
        for (si, shape) in part.shapes.iter().enumerate() {
            let spath = format!("{ppath}.shapes[{si}]");
            let positive = match shape.geometry {
                ShapeGeometry::Box { half_extents: h } => h.x > 0.0 && h.y > 0.0 && h.z > 0.0,
                ShapeGeometry::Sphere { radius } => radius > 0.0,
            };
            if !positive {
                diag.error("nonpositive_extent", spath.clone(), "shape extents must be positive");
            }
            if !((shape.declared_quat_norm - 1.0).abs() <= QUAT_NORM_TOLERANCE) {
                diag.error("non_unit_quaternion", format!("{spath}.quat"), format!("quaternion norm {} is not 1", shape.declared_quat_norm));
            }
        }

        for (ci, c) in part.connectors.iter().enumerate() {
            let cpath = format!("{ppath}.connectors[{ci}]");
            let me = ConnectorRef::new(&part.id, &c.id);
            if !valid_id(&c.id) {
                diag.error("invalid_id", format!("{cpath}.id"), format!("connector id `{}` must be nonempty without `.`, `|` or whitespace", c.id));
            }
            if !((c.declared_quat_norm - 1.0).abs() <= QUAT_NORM_TOLERANCE) {
                diag.error("non_unit_quaternion", format!("{cpath}.quat"), format!("quaternion norm {} is not 1", c.declared_quat_norm));
            }
            if c.symmetry_order < 1 {
                diag.error("bad_symmetry_order", format!("{cpath}.symmetry_order"), "symmetry_order must be at least 1");
            }
            if !(c.size >= 0.0) {
                diag.error("negative_size", format!("{cpath}.size"), "connector size must be nonnegative");
            }
            for shape in &part.shapes {
                let local = shape.offset.inverse().transform_point(c.local.pos);
                if let Some(depth) = embed_depth(shape.geometry, local) {
                    if depth > c.size {
                        diag.warn("embedded_connector", cpath.clone(), format!("connector `{me}` sits {depth:.4} m inside a shape, deeper than its size {}", c.size));
                        break;
                    }
                }
            }

            let Some(mate) = &c.mate else { continue };
            let mpath = format!("{cpath}.mate");
            if *mate == me {
                diag.error("self_mating", mpath, format!("connector `{me}` mates with itself"));
                continue;
            }
            if mate.part() == part.id {
                diag.error("same_part_mating", mpath, format!("connector `{me}` mates with `{mate}` on the same part"));
                continue;
            }
            let Some(other) = m.connector(mate) else {
                diag.error("unknown_mate", mpath, format!("connector `{me}` mates with unknown connector `{mate}`"));
                continue;
            };
            match &other.mate {
                Some(back) if *back == me => {
                    if other.symmetry_order != c.symmetry_order && me < *mate {
                        diag.error("symmetry_mismatch", format!("{cpath}.symmetry_order"), format!("`{me}` and `{mate}` declare different symmetry orders"));
                    }
                }
                Some(back) => diag.error("non_involutive_mating", mpath, format!("`{me}` mates with `{mate}`, but `{mate}` mates with `{back}`")),
                None => diag.error("non_involutive_mating", mpath, format!("`{me}` mates with `{mate}`, which declares no mate")),
            }
        }
    }

    goal_graph_checks(m, &mut diag);
    diag
}

fn goal_graph_checks(m: &FurnitureModel, diag: &mut Diagnostics) {
    let ids: BTreeSet<&str> = m.parts.iter().map(|p| p.id.as_str()).collect();
    if ids.len() < 2 {
        return;
    }
    let mut weld = WeldPartition::new(ids.iter().copied());
    let mut cyclic = false;
    for pair in m.mate_pairs() {
        if !weld.union(pair.a.part(), pair.b.part()) {
            cyclic = true;
        }
    }
    if weld.group_count() > 1 {
        let first = ids.iter().next().copied().unwrap_or_default();
        let stray: Vec<&str> = ids.iter().copied().filter(|p| !weld.same_group(first, p)).collect();
        diag.error(
            "disconnected_goal",
            "parts",
            format!("goal assembly is disconnected; not reachable from `{first}`: {}", stray.join(", ")),
        );
    }
    if cyclic {
        diag.warn("goal_cycle", "parts", "mate graph contains a cycle; redundant pairs are skipped once their parts are welded");
    }
}
