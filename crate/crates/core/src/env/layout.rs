//! Seeded initial layouts: part subset, floor placement and orientation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::rng::CounterRng;
use crate::assembly::collision::WorldShape;
use crate::geom::{Pose, UnitQuat, Vec3};
use crate::model::{FurnitureModel, Part};

pub const SPAWN_HALF_WIDTH: f64 = 0.8;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;
/// Above this many parts, subsets are grown randomly instead of enumerated.
const MAX_ENUMERATED_PARTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationRandomization {
    /// Parts keep their authored (identity) orientation.
    None,
    /// Uniform rotation about world z.
    #[default]
    Yaw,
    /// Uniform random rotation.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayoutOptions {
    pub random_subset: bool,
    pub orientation: OrientationRandomization,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("could not place part `{part}` without overlap after {MAX_PLACEMENT_ATTEMPTS} attempts")]
pub struct PlacementFailed {
    pub part: String,
}

/// Adjacency of the goal tree restricted to `parts`.
fn goal_adjacency(m: &FurnitureModel) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = m.parts.iter().map(|p| (p.id.as_str(), BTreeSet::new())).collect();
    for pair in m.mate_pairs() {
        let (a, b) = (pair.a.part(), pair.b.part());
        let (Some((ka, _)), Some((kb, _))) = (adj.get_key_value(a), adj.get_key_value(b)) else { continue };
        let (ka, kb) = (*ka, *kb);
        adj.get_mut(ka).expect("present").insert(kb);
        adj.get_mut(kb).expect("present").insert(ka);
    }
    adj
}

fn is_connected(adj: &BTreeMap<&str, BTreeSet<&str>>, subset: &BTreeSet<&str>) -> bool {
    let Some(&start) = subset.iter().next() else { return false };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        for &q in &adj[p] {
            if subset.contains(q) && seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    seen.len() == subset.len()
}

/// A uniformly random connected subset of the goal tree with at least two
/// parts (exhaustive enumeration for small models, random growth above
/// that). Models with fewer than two parts spawn everything.
pub fn choose_subset(m: &FurnitureModel, rng: &mut CounterRng) -> Vec<String> {
    let ids = m.part_ids();
    if ids.len() < 2 {
        return ids.into_iter().map(str::to_string).collect();
    }
    let adj = goal_adjacency(m);
    if ids.len() <= MAX_ENUMERATED_PARTS {
        let candidates: Vec<BTreeSet<&str>> = (1u32..(1 << ids.len()))
            .filter(|mask| mask.count_ones() >= 2)
            .map(|mask| ids.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, id)| *id).collect())
            .filter(|s| is_connected(&adj, s))
            .collect();
        if candidates.is_empty() {
            return ids.into_iter().map(str::to_string).collect();
        }
        let pick = &candidates[rng.index(candidates.len())];
        return pick.iter().map(|s| s.to_string()).collect();
    }
    let target = 2 + rng.index(ids.len() - 1);
    let mut chosen = BTreeSet::from([ids[rng.index(ids.len())]]);
    while chosen.len() < target {
        let frontier: Vec<&str> = chosen
            .iter()
            .flat_map(|p| adj[p].iter().copied())
            .filter(|q| !chosen.contains(q))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if frontier.is_empty() {
            break;
        }
        chosen.insert(frontier[rng.index(frontier.len())]);
    }
    chosen.into_iter().map(str::to_string).collect()
}

/// Height of the part origin that puts its lowest point on z = 0.
fn floor_height(part: &Part, rot: UnitQuat) -> f64 {
    part.shapes
        .iter()
        .map(|s| WorldShape::place(s, Pose::rotation(rot)).aabb().min.z)
        .fold(f64::INFINITY, f64::min)
        .min(0.0)
        .abs()
}

/// Poses for `parts` on the floor inside the spawn square, no two bounding
/// spheres overlapping. Draws are consumed in sorted part order.
pub fn place_parts(
    m: &FurnitureModel,
    parts: &[String],
    rng: &mut CounterRng,
    orientation: OrientationRandomization,
) -> Result<BTreeMap<String, Pose>, PlacementFailed> {
    let mut sorted: Vec<&String> = parts.iter().collect();
    sorted.sort();
    let mut placed: Vec<(Vec3, f64)> = Vec::new();
    let mut out = BTreeMap::new();
    for id in sorted {
        let Some(part) = m.part(id) else { continue };
        let radius = part.bounding_radius();
        let mut pose = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let rot = match orientation {
                OrientationRandomization::None => UnitQuat::IDENTITY,
                OrientationRandomization::Yaw => UnitQuat::from_axis_angle(Vec3::Z, rng.uniform(0.0, std::f64::consts::TAU)),
                OrientationRandomization::Full => rng.unit_quat(),
            };
            let x = rng.uniform(-SPAWN_HALF_WIDTH, SPAWN_HALF_WIDTH);
            let y = rng.uniform(-SPAWN_HALF_WIDTH, SPAWN_HALF_WIDTH);
            let pos = Vec3::new(x, y, floor_height(part, rot));
            if placed.iter().all(|(c, r)| (*c - pos).norm() >= r + radius) {
                placed.push((pos, radius));
                pose = Some(Pose::new(pos, rot));
                break;
            }
        }
        match pose {
            Some(p) => {
                out.insert(id.clone(), p);
            }
            None => return Err(PlacementFailed { part: id.clone() }),
        }
    }
    Ok(out)
}

pub fn randomize_layout(
    m: &FurnitureModel,
    rng: &mut CounterRng,
    opts: LayoutOptions,
) -> Result<BTreeMap<String, Pose>, PlacementFailed> {
    let parts = if opts.random_subset {
        choose_subset(m, rng)
    } else {
        m.part_ids().into_iter().map(str::to_string).collect()
    };
    place_parts(m, &parts, rng, opts.orientation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled_model;

    #[test]
    fn block_layout_is_reproducible_and_separated() {
        let m = bundled_model("block").unwrap();
        let opts = LayoutOptions::default();
        let a = randomize_layout(&m, &mut CounterRng::new(5), opts).unwrap();
        let b = randomize_layout(&m, &mut CounterRng::new(5), opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        let r = m.parts[0].bounding_radius() + m.parts[1].bounding_radius();
        let (pa, pb) = (a["block_a"].pos, a["block_b"].pos);
        assert!(Vec3::new(pa.x - pb.x, pa.y - pb.y, 0.0).norm() >= r);
        for p in a.values() {
            assert!(p.pos.x.abs() <= SPAWN_HALF_WIDTH && p.pos.y.abs() <= SPAWN_HALF_WIDTH);
            assert!((p.pos.z - 0.05).abs() < 1e-12, "block rests on the floor");
        }
    }

    #[test]
    fn orientation_modes() {
        let m = bundled_model("table_simple").unwrap();
        let none = LayoutOptions { orientation: OrientationRandomization::None, ..Default::default() };
        for p in randomize_layout(&m, &mut CounterRng::new(1), none).unwrap().values() {
            assert_eq!(p.rot, UnitQuat::IDENTITY);
        }
        let yaw = randomize_layout(&m, &mut CounterRng::new(1), LayoutOptions::default()).unwrap();
        for p in yaw.values() {
            assert!(p.rot.rotate(Vec3::Z).z > 1.0 - 1e-12);
        }
        let full = LayoutOptions { orientation: OrientationRandomization::Full, ..Default::default() };
        let full = randomize_layout(&m, &mut CounterRng::new(1), full).unwrap();
        for (id, p) in &full {
            // Lowest point sits on the floor whatever the tilt.
            let part = m.part(id).unwrap();
            let low = part
                .shapes
                .iter()
                .map(|s| WorldShape::place(s, *p).aabb().min.z)
                .fold(f64::INFINITY, f64::min);
            assert!(low.abs() < 1e-12, "{id}: {low}");
        }
    }

    #[test]
    fn subsets_are_connected_and_cover_all_choices() {
        let m = bundled_model("table_simple").unwrap();
        let adj = goal_adjacency(&m);
        let mut seen = BTreeSet::new();
        for seed in 0..400 {
            let s = choose_subset(&m, &mut CounterRng::new(seed));
            assert!(s.len() >= 2);
            let set: BTreeSet<&str> = s.iter().map(String::as_str).collect();
            assert!(is_connected(&adj, &set), "{s:?}");
            seen.insert(s);
        }
        // Star with 4 leaves: every non-empty leaf subset plus the board = 15.
        assert_eq!(seen.len(), 15);

        let block = bundled_model("block").unwrap();
        for seed in 0..20 {
            assert_eq!(choose_subset(&block, &mut CounterRng::new(seed)).len(), 2);
        }
    }

    #[test]
    fn overcrowded_model_fails_placement() {
        let big = r#"{"name": "big", "version": 1, "parts": [
            {"id": "a", "shapes": [{"kind": "sphere", "radius": 1.2}], "connectors": [{"id": "c", "size": 0.01, "mate": "b.c"}]},
            {"id": "b", "shapes": [{"kind": "sphere", "radius": 1.2}], "connectors": [{"id": "c", "size": 0.01, "mate": "a.c"}]}
        ]}"#;
        let m = crate::model::parse_model(big.as_bytes()).unwrap();
        let err = randomize_layout(&m, &mut CounterRng::new(0), LayoutOptions::default()).unwrap_err();
        assert_eq!(err.part, "b");
    }
}
