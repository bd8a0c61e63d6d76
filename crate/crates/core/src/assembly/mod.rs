//! Connector alignment, snap-and-weld connection, and rigid motion of weld
//! groups.
//!
//! A mate pair is *attachable* when its two world connector frames are
//! closer than `epsilon_distance`, and both the up vectors and the forward
//! vectors have cosine similarity above their thresholds. Connecting snaps
//! the moving group exactly onto the target frame and merges the two weld
//! groups.

pub mod collision;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::CursorState;
use crate::geom::{cosine_similarity, euclidean_distance, pose_compose, pose_inverse, Pose, UnitQuat, Vec3};
use crate::model::{ConnectorRef, FurnitureModel, MatePair};
use crate::weld::WeldPartition;

use collision::{shapes_overlap, Aabb, WorldShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentThresholds {
    /// Maximum connector distance, meters (exclusive).
    pub epsilon_distance: f64,
    /// Minimum up-vector cosine similarity (exclusive).
    pub epsilon_up: f64,
    /// Minimum forward-vector cosine similarity (exclusive).
    pub epsilon_forward: f64,
}

impl Default for AlignmentThresholds {
    fn default() -> Self {
        Self { epsilon_distance: 0.05, epsilon_up: 0.95, epsilon_forward: 0.90 }
    }
}

impl AlignmentThresholds {
    pub fn check(&self) -> Result<(), String> {
        if !(self.epsilon_distance > 0.0 && self.epsilon_distance.is_finite()) {
            return Err(format!("epsilon_distance must be positive, got {}", self.epsilon_distance));
        }
        for (name, v) in [("epsilon_up", self.epsilon_up), ("epsilon_forward", self.epsilon_forward)] {
            if !(v > -1.0 && v <= 1.0) {
                return Err(format!("{name} must lie in (-1, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// A connector frame in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConnectorFrame {
    pub owner: ConnectorRef,
    pub pos: Vec3,
    /// Local +z.
    pub up: Vec3,
    /// Local +x.
    pub forward: Vec3,
    pub rot: UnitQuat,
}

impl WorldConnectorFrame {
    pub fn from_pose(owner: ConnectorRef, world: Pose) -> Self {
        Self {
            owner,
            pos: world.pos,
            up: world.rot.rotate(Vec3::Z),
            forward: world.rot.rotate(Vec3::X),
            rot: world.rot,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.pos, self.rot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttachabilityResult {
    pub pos_ok: bool,
    pub up_ok: bool,
    pub forward_ok: bool,
    pub attachable: bool,
    pub distance: f64,
    pub up_sim: f64,
    pub forward_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("unknown connector `{0}`")]
    UnknownConnector(String),
    #[error("part `{0}` is not in the scene")]
    UnknownPart(String),
    #[error("unknown mate pair `{0}`")]
    UnknownPair(String),
}

/// Why a connect request did nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoOpReason {
    NoAttachable,
    NotAttachable,
    AlreadyConnected,
    SameGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConnectEvent {
    Connected {
        pair: String,
        /// Root of the group that was moved, before merging.
        moved_root: String,
        /// Connector distance just before snapping.
        distance: f64,
    },
    #[serde(rename = "connect_noop")]
    NoOp { reason: NoOpReason },
}

/// The authoritative episode state.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyState {
    /// World pose of every part in the scene.
    pub poses: BTreeMap<String, Pose>,
    pub weld: WeldPartition,
    pub connected_pairs: BTreeSet<MatePair>,
    pub cursors: [CursorState; 2],
}

impl AssemblyState {
    /// Singleton weld groups for the given poses.
    pub fn new(poses: BTreeMap<String, Pose>, cursors: [CursorState; 2]) -> Self {
        let weld = WeldPartition::new(poses.keys().cloned());
        Self { poses, weld, connected_pairs: BTreeSet::new(), cursors }
    }

    pub fn part_ids(&self) -> impl Iterator<Item = &str> {
        self.poses.keys().map(String::as_str)
    }

    pub fn group_root(&self, part: &str) -> Option<&str> {
        self.weld.root(part)
    }

    /// Whether any cursor holds a part of `part`'s group.
    pub fn group_held(&self, part: &str) -> bool {
        self.cursors
            .iter()
            .filter_map(|c| c.held.as_deref())
            .any(|h| self.weld.same_group(h, part))
    }

    /// Mate pairs of `m` whose two parts are in the scene.
    pub fn scene_pairs(&self, m: &FurnitureModel) -> Vec<MatePair> {
        m.mate_pairs()
            .into_iter()
            .filter(|p| self.poses.contains_key(p.a.part()) && self.poses.contains_key(p.b.part()))
            .collect()
    }

    /// World-space shapes of one part.
    pub fn part_shapes(&self, m: &FurnitureModel, part: &str) -> Vec<WorldShape> {
        match (m.part(part), self.poses.get(part)) {
            (Some(p), Some(&pose)) => p.shapes.iter().map(|s| WorldShape::place(s, pose)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn part_aabb(&self, m: &FurnitureModel, part: &str) -> Option<Aabb> {
        self.part_shapes(m, part).iter().map(WorldShape::aabb).reduce(Aabb::union)
    }

    pub fn is_fully_connected(&self) -> bool {
        self.weld.group_count() <= 1
    }
}

pub fn connector_world_frame(
    state: &AssemblyState,
    m: &FurnitureModel,
    c: &ConnectorRef,
) -> Result<WorldConnectorFrame, AssemblyError> {
    let conn = m.connector(c).ok_or_else(|| AssemblyError::UnknownConnector(c.to_string()))?;
    let part_pose = state
        .poses
        .get(c.part())
        .ok_or_else(|| AssemblyError::UnknownPart(c.part().to_string()))?;
    Ok(WorldConnectorFrame::from_pose(c.clone(), pose_compose(*part_pose, conn.local)))
}

fn unit_cos(u: Vec3, v: Vec3) -> f64 {
    cosine_similarity(u, v).unwrap_or(-1.0)
}

/// Best forward similarity over the `n` symmetric images of `a.forward`
/// about `a.up`. `n <= 1` is the plain cosine.
fn symmetric_forward_sim(a: &WorldConnectorFrame, b: &WorldConnectorFrame, n: u32) -> f64 {
    let mut best = unit_cos(a.forward, b.forward);
    for k in 1..n.max(1) {
        let turn = UnitQuat::from_axis_angle(a.up, TAU * f64::from(k) / f64::from(n));
        best = best.max(unit_cos(turn.rotate(a.forward), b.forward));
    }
    best
}

/// Evaluates the position, up and forward conditions for a connector pair.
pub fn check_alignment(
    a: &WorldConnectorFrame,
    b: &WorldConnectorFrame,
    t: &AlignmentThresholds,
    symmetry_order: u32,
) -> AttachabilityResult {
    let distance = euclidean_distance(a.pos, b.pos);
    let up_sim = unit_cos(a.up, b.up);
    let forward_sim = symmetric_forward_sim(a, b, symmetry_order);
    let pos_ok = distance < t.epsilon_distance;
    let up_ok = up_sim > t.epsilon_up;
    let forward_ok = forward_sim > t.epsilon_forward;
    AttachabilityResult {
        pos_ok,
        up_ok,
        forward_ok,
        attachable: pos_ok && up_ok && forward_ok,
        distance,
        up_sim,
        forward_sim,
    }
}

pub fn check_pair(
    state: &AssemblyState,
    m: &FurnitureModel,
    t: &AlignmentThresholds,
    pair: &MatePair,
) -> Result<AttachabilityResult, AssemblyError> {
    let a = connector_world_frame(state, m, &pair.a)?;
    let b = connector_world_frame(state, m, &pair.b)?;
    Ok(check_alignment(&a, &b, t, m.pair_symmetry(pair)))
}

/// Alignment of every unconnected scene pair whose parts are in different
/// weld groups, in pair order.
pub fn scan_attachable(
    state: &AssemblyState,
    m: &FurnitureModel,
    t: &AlignmentThresholds,
) -> Vec<(MatePair, AttachabilityResult)> {
    state
        .scene_pairs(m)
        .into_iter()
        .filter(|p| !state.connected_pairs.contains(p) && !state.weld.same_group(p.a.part(), p.b.part()))
        .filter_map(|p| check_pair(state, m, t, &p).ok().map(|r| (p, r)))
        .collect()
}

/// World transform that carries `moving` exactly onto `target`, or onto the
/// symmetric image of `target` (about its up axis) nearest to `moving`.
pub fn snap_transform(target: &WorldConnectorFrame, moving: &WorldConnectorFrame, symmetry_order: u32) -> Pose {
    let n = symmetry_order.max(1);
    let mut goal_rot = target.rot;
    let mut best = unit_cos(target.forward, moving.forward);
    for k in 1..n {
        let rot = target.rot.mul(UnitQuat::from_axis_angle(Vec3::Z, TAU * f64::from(k) / f64::from(n)));
        let sim = unit_cos(rot.rotate(Vec3::X), moving.forward);
        if sim > best {
            best = sim;
            goal_rot = rot;
        }
    }
    pose_compose(Pose::new(target.pos, goal_rot), pose_inverse(moving.pose()))
}

/// Rotates every part of `root`'s group by `delta.rot` about `pivot`, then
/// translates it by `delta.pos`.
pub fn transform_group(
    state: &mut AssemblyState,
    root: &str,
    delta: Pose,
    pivot: Vec3,
) -> Result<(), AssemblyError> {
    if !state.weld.contains(root) {
        return Err(AssemblyError::UnknownPart(root.to_string()));
    }
    let members: Vec<String> = state.weld.members(root).into_iter().map(str::to_string).collect();
    for id in members {
        if let Some(p) = state.poses.get_mut(&id) {
            *p = Pose::new(
                pivot + delta.rot.rotate(p.pos - pivot) + delta.pos,
                delta.rot.mul(p.rot),
            );
        }
    }
    Ok(())
}

/// Applies a world transform `t` (as `t * pose`) to every part of a group.
pub fn apply_world_transform(state: &mut AssemblyState, root: &str, t: Pose) -> Result<(), AssemblyError> {
    if !state.weld.contains(root) {
        return Err(AssemblyError::UnknownPart(root.to_string()));
    }
    let members: Vec<String> = state.weld.members(root).into_iter().map(str::to_string).collect();
    for id in members {
        if let Some(p) = state.poses.get_mut(&id) {
            *p = pose_compose(t, *p);
        }
    }
    Ok(())
}

/// Picks which side of `pair` moves: a held group moves onto an unheld one;
/// otherwise the smaller group moves; ties move the group whose root sorts
/// first. Returns `(moving connector, target connector)`.
fn choose_moving<'p>(state: &AssemblyState, pair: &'p MatePair) -> (&'p ConnectorRef, &'p ConnectorRef) {
    let (a, b) = (&pair.a, &pair.b);
    let (ha, hb) = (state.group_held(a.part()), state.group_held(b.part()));
    if ha != hb {
        return if ha { (a, b) } else { (b, a) };
    }
    let (sa, sb) = (state.weld.group_size(a.part()), state.weld.group_size(b.part()));
    if sa != sb {
        return if sa < sb { (a, b) } else { (b, a) };
    }
    let ra = state.weld.root(a.part()).unwrap_or_default();
    let rb = state.weld.root(b.part()).unwrap_or_default();
    if ra <= rb {
        (a, b)
    } else {
        (b, a)
    }
}

/// Connects `pair`, or the closest attachable pair when `pair` is `None`.
///
/// Unattachable requests leave the state untouched and report a no-op.
pub fn connect(
    state: &mut AssemblyState,
    m: &FurnitureModel,
    t: &AlignmentThresholds,
    pair: Option<&MatePair>,
) -> Result<ConnectEvent, AssemblyError> {
    let chosen = match pair {
        Some(p) => {
            if !state.scene_pairs(m).contains(p) {
                return Err(AssemblyError::UnknownPair(p.id()));
            }
            if state.connected_pairs.contains(p) {
                return Ok(ConnectEvent::NoOp { reason: NoOpReason::AlreadyConnected });
            }
            if state.weld.same_group(p.a.part(), p.b.part()) {
                return Ok(ConnectEvent::NoOp { reason: NoOpReason::SameGroup });
            }
            let r = check_pair(state, m, t, p)?;
            if !r.attachable {
                return Ok(ConnectEvent::NoOp { reason: NoOpReason::NotAttachable });
            }
            (p.clone(), r)
        }
        None => {
            let mut best: Option<(MatePair, AttachabilityResult)> = None;
            for (p, r) in scan_attachable(state, m, t) {
                if r.attachable && best.as_ref().is_none_or(|(_, b)| r.distance < b.distance) {
                    best = Some((p, r));
                }
            }
            match best {
                Some(b) => b,
                None => return Ok(ConnectEvent::NoOp { reason: NoOpReason::NoAttachable }),
            }
        }
    };

    let (pair, result) = chosen;
    let (moving, target) = choose_moving(state, &pair);
    let moving_frame = connector_world_frame(state, m, moving)?;
    let target_frame = connector_world_frame(state, m, target)?;
    let snap = snap_transform(&target_frame, &moving_frame, m.pair_symmetry(&pair));
    let moved_root = state.weld.root(moving.part()).unwrap_or_default().to_string();
    apply_world_transform(state, moving.part(), snap)?;
    state.weld.union(moving.part(), target.part());
    state.connected_pairs.insert(pair.clone());
    Ok(ConnectEvent::Connected { pair: pair.id(), moved_root, distance: result.distance })
}

/// True when any shape of `root`'s group strictly overlaps a shape of a part
/// in another group.
pub fn collide(state: &AssemblyState, m: &FurnitureModel, root: &str) -> bool {
    let mine: Vec<WorldShape> = state
        .weld
        .members(root)
        .into_iter()
        .flat_map(|p| state.part_shapes(m, p))
        .collect();
    if mine.is_empty() {
        return false;
    }
    let my_box = mine.iter().map(WorldShape::aabb).reduce(Aabb::union).expect("nonempty");
    for other in state.part_ids() {
        if state.weld.same_group(root, other) {
            continue;
        }
        for theirs in state.part_shapes(m, other) {
            if !theirs.aabb().intersects(&my_box) {
                continue;
            }
            if mine.iter().any(|s| shapes_overlap(s, &theirs)) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::CursorState;
    use crate::model::{bundled_model, goal_relative_pose, ConvexShape, Part, ShapeGeometry};
    use std::f64::consts::FRAC_PI_2;

    fn cursors() -> [CursorState; 2] {
        [CursorState::at(Vec3::new(-0.3, 0.0, 0.3)), CursorState::at(Vec3::new(0.3, 0.0, 0.3))]
    }

    fn state_with(poses: &[(&str, Pose)]) -> AssemblyState {
        AssemblyState::new(poses.iter().map(|(k, v)| (k.to_string(), *v)).collect(), cursors())
    }

    fn r(s: &str) -> ConnectorRef {
        s.parse().unwrap()
    }

    fn frame(pos: Vec3, rot: UnitQuat) -> WorldConnectorFrame {
        WorldConnectorFrame::from_pose(r("x.y"), Pose::new(pos, rot))
    }

    fn block_at_goal() -> (AssemblyState, std::sync::Arc<FurnitureModel>) {
        let m = bundled_model("block").unwrap();
        let base = Pose::new(Vec3::new(0.2, -0.1, 0.05), UnitQuat::from_axis_angle(Vec3::Z, 0.3));
        let rel = goal_relative_pose(&m, &r("block_a.top"), &r("block_b.bottom")).unwrap();
        (state_with(&[("block_a", base), ("block_b", pose_compose(base, rel))]), m)
    }

    #[test]
    fn world_frame_examples() {
        let m = bundled_model("block").unwrap();
        let s = state_with(&[("block_a", Pose::IDENTITY), ("block_b", Pose::IDENTITY)]);
        let f = connector_world_frame(&s, &m, &r("block_a.top")).unwrap();
        assert_eq!(f.pos, Vec3::new(0.0, 0.0, 0.05));
        assert_eq!((f.up, f.forward), (Vec3::Z, Vec3::X));

        let s = state_with(&[
            ("block_a", Pose::rotation(UnitQuat::from_axis_angle(Vec3::Z, FRAC_PI_2))),
            ("block_b", Pose::translation(Vec3::X)),
        ]);
        let f = connector_world_frame(&s, &m, &r("block_a.top")).unwrap();
        assert!((f.forward - Vec3::Y).max_abs() < 1e-12);
        let f = connector_world_frame(&s, &m, &r("block_b.bottom")).unwrap();
        assert!((f.pos - Vec3::new(1.0, 0.0, -0.05)).max_abs() < 1e-12);

        assert!(matches!(
            connector_world_frame(&s, &m, &r("block_a.nope")),
            Err(AssemblyError::UnknownConnector(_))
        ));
    }

    #[test]
    fn alignment_examples() {
        let t = AlignmentThresholds::default();
        let f = frame(Vec3::ZERO, UnitQuat::IDENTITY);
        let res = check_alignment(&f, &f, &t, 1);
        assert!(res.attachable);
        assert_eq!((res.distance, res.up_sim, res.forward_sim), (0.0, 1.0, 1.0));

        let far = frame(Vec3::X, UnitQuat::IDENTITY);
        let res = check_alignment(&f, &far, &t, 1);
        assert!(!res.pos_ok && !res.attachable && res.up_ok && res.forward_ok);
    }

    #[test]
    fn alignment_at_stated_similarities() {
        // Build b so that distance = 0.04, up_sim = 0.99 and forward_sim = 0.95 exactly
        // up to rounding: tilt about x changes up only, then yaw about the tilted up
        // changes forward only.
        let t = AlignmentThresholds::default();
        let a = frame(Vec3::ZERO, UnitQuat::IDENTITY);
        let tilt = UnitQuat::from_axis_angle(Vec3::X, 0.99f64.acos());
        let yaw = UnitQuat::from_axis_angle(Vec3::Z, 0.95f64.acos());
        let b = frame(Vec3::new(0.0, 0.04, 0.0), tilt.mul(yaw));
        let res = check_alignment(&a, &b, &t, 1);
        assert!((res.distance - 0.04).abs() < 1e-15);
        assert!((res.up_sim - 0.99).abs() < 1e-12);
        assert!((res.forward_sim - 0.95).abs() < 1e-12);
        assert!(res.attachable);
        // Just over each threshold fails only that condition.
        let b = frame(Vec3::new(0.0, 0.05, 0.0), UnitQuat::IDENTITY);
        assert!(!check_alignment(&a, &b, &t, 1).pos_ok);
    }

    #[test]
    fn symmetric_forward() {
        let t = AlignmentThresholds::default();
        let a = frame(Vec3::ZERO, UnitQuat::IDENTITY);
        let b = frame(Vec3::ZERO, UnitQuat::from_axis_angle(Vec3::Z, FRAC_PI_2));
        assert!(!check_alignment(&a, &b, &t, 1).forward_ok);
        let res = check_alignment(&a, &b, &t, 4);
        assert!(res.forward_ok && (res.forward_sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scan_examples() {
        let (s, m) = block_at_goal();
        let t = AlignmentThresholds::default();
        let scan = scan_attachable(&s, &m, &t);
        assert_eq!(scan.len(), 1);
        assert!(scan[0].1.attachable);

        let far = state_with(&[
            ("block_a", Pose::translation(Vec3::new(-1.2, -1.2, 0.05))),
            ("block_b", Pose::translation(Vec3::new(1.2, 1.2, 0.05))),
        ]);
        let scan = scan_attachable(&far, &m, &t);
        assert_eq!(scan.len(), 1);
        assert!(!scan[0].1.attachable);

        let mut done = s.clone();
        assert!(matches!(connect(&mut done, &m, &t, None).unwrap(), ConnectEvent::Connected { .. }));
        assert!(scan_attachable(&done, &m, &t).is_empty());
    }

    #[test]
    fn snap_examples() {
        let f = frame(Vec3::new(0.1, 0.2, 0.3), UnitQuat::from_axis_angle(Vec3::Y, 0.4));
        let t = snap_transform(&f, &f, 1);
        assert!(t.pos.max_abs() < 1e-12 && t.rot.angle_to(UnitQuat::IDENTITY) < 1e-7);

        let target = frame(Vec3::ZERO, UnitQuat::IDENTITY);
        let moving = frame(Vec3::new(0.0, 0.0, 0.03), UnitQuat::IDENTITY);
        let t = snap_transform(&target, &moving, 1);
        assert!((t.pos - Vec3::new(0.0, 0.0, -0.03)).max_abs() < 1e-15);

        // Moving rotated 10 deg about its up: correction is a -10 deg turn,
        // and re-applying it makes the frames coincide.
        let ten = 10f64.to_radians();
        let moving = frame(Vec3::new(0.01, 0.0, 0.0), UnitQuat::from_axis_angle(Vec3::Z, ten));
        let t = snap_transform(&target, &moving, 1);
        assert!((t.rot.to_axis_angle().1 - ten).abs() < 1e-12);
        let after = pose_compose(t, moving.pose());
        assert!(after.pos.max_abs() < 1e-9);
        assert!(after.rot.angle_to(UnitQuat::IDENTITY) < 1e-7);
    }

    #[test]
    fn snap_with_symmetry_picks_nearest_image() {
        let target = frame(Vec3::ZERO, UnitQuat::IDENTITY);
        let moving = frame(Vec3::ZERO, UnitQuat::from_axis_angle(Vec3::Z, 80f64.to_radians()));
        let t = snap_transform(&target, &moving, 4);
        // Nearest image is 90 deg: a 10 deg correction, not 80.
        assert!((t.rot.to_axis_angle().1 - 10f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn connect_block_merges_and_coincides() {
        let (mut s, m) = block_at_goal();
        // Perturb b within thresholds.
        let t = AlignmentThresholds::default();
        transform_group(&mut s, "block_b", Pose::new(Vec3::new(0.01, -0.02, 0.01), UnitQuat::from_axis_angle(Vec3::Z, 0.1)), Vec3::ZERO).unwrap();
        let ev = connect(&mut s, &m, &t, None).unwrap();
        match ev {
            ConnectEvent::Connected { pair, moved_root, .. } => {
                assert_eq!(pair, "block_a.top|block_b.bottom");
                // Equal sizes, nothing held: root "block_a" sorts first and moves.
                assert_eq!(moved_root, "block_a");
            }
            e => panic!("{e:?}"),
        }
        assert_eq!(s.weld.group_count(), 1);
        let a = connector_world_frame(&s, &m, &r("block_a.top")).unwrap();
        let b = connector_world_frame(&s, &m, &r("block_b.bottom")).unwrap();
        let res = check_alignment(&a, &b, &t, 1);
        assert!(res.distance < 1e-9 && res.up_sim > 1.0 - 1e-9 && res.forward_sim > 1.0 - 1e-9);
        assert_eq!(
            connect(&mut s, &m, &t, Some(&MatePair::new(r("block_a.top"), r("block_b.bottom")))).unwrap(),
            ConnectEvent::NoOp { reason: NoOpReason::AlreadyConnected }
        );
    }

    #[test]
    fn held_group_is_the_one_that_moves() {
        let (mut s, m) = block_at_goal();
        s.cursors[1].held = Some("block_b".into());
        let before_a = s.poses["block_a"];
        transform_group(&mut s, "block_b", Pose::translation(Vec3::new(0.0, 0.0, 0.02)), Vec3::ZERO).unwrap();
        let ev = connect(&mut s, &m, &AlignmentThresholds::default(), None).unwrap();
        assert!(matches!(ev, ConnectEvent::Connected { ref moved_root, .. } if moved_root == "block_b"));
        assert_eq!(s.poses["block_a"], before_a);
    }

    #[test]
    fn connect_noops_and_errors() {
        let m = bundled_model("block").unwrap();
        let t = AlignmentThresholds::default();
        let mut s = state_with(&[
            ("block_a", Pose::translation(Vec3::new(-1.0, 0.0, 0.05))),
            ("block_b", Pose::translation(Vec3::new(1.0, 0.0, 0.05))),
        ]);
        let before = s.clone();
        assert_eq!(connect(&mut s, &m, &t, None).unwrap(), ConnectEvent::NoOp { reason: NoOpReason::NoAttachable });
        let pair = MatePair::new(r("block_a.top"), r("block_b.bottom"));
        assert_eq!(connect(&mut s, &m, &t, Some(&pair)).unwrap(), ConnectEvent::NoOp { reason: NoOpReason::NotAttachable });
        assert_eq!(s, before);
        let bogus = MatePair::new(r("block_a.top"), r("block_a.nope"));
        assert!(matches!(connect(&mut s, &m, &t, Some(&bogus)), Err(AssemblyError::UnknownPair(_))));
    }

    #[test]
    fn transform_group_examples() {
        let (mut s, m) = block_at_goal();
        s.weld.union("block_a", "block_b");
        let before = s.clone();
        transform_group(&mut s, "block_a", Pose::IDENTITY, Vec3::ZERO).unwrap();
        assert_eq!(s, before);

        transform_group(&mut s, "block_b", Pose::translation(Vec3::new(0.0, 0.0, 0.1)), Vec3::ZERO).unwrap();
        for id in ["block_a", "block_b"] {
            assert!((s.poses[id].pos - before.poses[id].pos - Vec3::new(0.0, 0.0, 0.1)).max_abs() < 1e-12);
        }

        let rel = |s: &AssemblyState| pose_compose(pose_inverse(s.poses["block_a"]), s.poses["block_b"]);
        let rel_before = rel(&s);
        let q = UnitQuat::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let pre = s.clone();
        transform_group(&mut s, "block_a", Pose::rotation(q), Vec3::ZERO).unwrap();
        for id in ["block_a", "block_b"] {
            let p = pre.poses[id].pos;
            let expect = Vec3::new(-p.y, p.x, p.z);
            assert!((s.poses[id].pos - expect).max_abs() < 1e-12);
        }
        let rel_after = rel(&s);
        assert!((rel_after.pos - rel_before.pos).max_abs() < 1e-9);
        assert!(rel_after.rot.angle_to(rel_before.rot) < 1e-7);
        assert!(transform_group(&mut s, "ghost", Pose::IDENTITY, Vec3::ZERO).is_err());
        let _ = m;
    }

    #[test]
    fn collide_examples() {
        let unit = FurnitureModel {
            name: "boxes".into(),
            version: 1,
            thresholds: None,
            parts: ["p", "q"]
                .iter()
                .map(|id| Part {
                    id: id.to_string(),
                    shapes: vec![ConvexShape::new(ShapeGeometry::Box { half_extents: Vec3::splat(0.5) }, Pose::IDENTITY)],
                    connectors: vec![],
                })
                .collect(),
        };
        let apart = state_with(&[("p", Pose::IDENTITY), ("q", Pose::translation(Vec3::new(3.0, 0.0, 0.0)))]);
        assert!(!collide(&apart, &unit, "p"));
        let same = state_with(&[("p", Pose::IDENTITY), ("q", Pose::IDENTITY)]);
        assert!(collide(&same, &unit, "p") && collide(&same, &unit, "q"));
        let mut welded = same.clone();
        welded.weld.union("p", "q");
        assert!(!collide(&welded, &unit, "p"));
    }
}
