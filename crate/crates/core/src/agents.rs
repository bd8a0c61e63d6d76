//! The cursor agent: two floating, collision-free cubes that grasp, move,
//! rotate and release weld groups.
//!
//! Continuous actions are 15 reals, laid out per cursor as
//! `[move x, move y, move z, rot x, rot y, rot z, hold]` (cursor 0 then
//! cursor 1) followed by the global `connect` channel. Discrete actions are
//! integers in `0..29`: `cursor * 14 + primitive`, where the primitives are
//! `+x -x +y -y +z -z` moves (0..6), `+rx -rx +ry -ry +rz -rz` rotations
//! (6..12), hold toggle (12) and release (13); id 28 is connect.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::collision::Aabb;
use crate::assembly::{collide, transform_group, AssemblyState};
use crate::geom::{Pose, UnitQuat, Vec3};
use crate::model::FurnitureModel;

pub const CONTINUOUS_ARITY: usize = 15;
pub const DISCRETE_ACTIONS: i64 = 29;
pub const PRIMITIVES_PER_CURSOR: i64 = 14;
pub const DISCRETE_CONNECT: i64 = 28;
pub const DEFAULT_CURSOR_HALF_EXTENT: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CursorState {
    /// Cube center, world frame.
    pub pos: Vec3,
    /// A part of the held weld group.
    pub held: Option<String>,
    pub half_extent: f64,
}

impl CursorState {
    pub fn at(pos: Vec3) -> Self {
        Self { pos, held: None, half_extent: DEFAULT_CURSOR_HALF_EXTENT }
    }

    pub fn cube(&self) -> Aabb {
        Aabb::around(self.pos, Vec3::splat(self.half_extent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Continuous,
    Discrete,
}

/// Raw action payload as it travels on the wire and in trajectory files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(i64),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn null(mode: ActionMode) -> Action {
        match mode {
            ActionMode::Continuous => Action::Continuous(vec![0.0; CONTINUOUS_ARITY]),
            // Discrete mode has no null id; the closest thing is an immediate
            // no-op release on an idle cursor.
            ActionMode::Discrete => Action::Discrete(13),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("continuous actions take {CONTINUOUS_ARITY} values, got {0}")]
    WrongArity(usize),
    #[error("discrete action id {0} is outside 0..{DISCRETE_ACTIONS}")]
    OutOfRange(i64),
    #[error("action value at index {0} is not finite")]
    NonFinite(usize),
    #[error("{got:?} action sent to a {mode:?} environment")]
    ModeMismatch { mode: ActionMode, got: ActionMode },
}

/// How the hold channel is interpreted for one cursor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grip {
    /// Continuous level: `> 0` grasps or keeps holding, `<= 0` releases.
    Level(f64),
    /// Leave the hold state alone.
    Keep,
    /// Grasp when empty, release when holding.
    Toggle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CursorChannels {
    pub mv: Vec3,
    pub rot: Vec3,
    pub grip: Grip,
}

impl CursorChannels {
    pub const IDLE: CursorChannels = CursorChannels { mv: Vec3::ZERO, rot: Vec3::ZERO, grip: Grip::Keep };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CursorCommand {
    pub cursors: [CursorChannels; 2],
    pub connect: f64,
}

impl CursorCommand {
    pub fn connect_requested(&self) -> bool {
        self.connect > 0.0
    }
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

pub fn decode_action(raw: &Action, mode: ActionMode) -> Result<CursorCommand, ActionError> {
    match (raw, mode) {
        (Action::Continuous(values), ActionMode::Continuous) => {
            if values.len() != CONTINUOUS_ARITY {
                return Err(ActionError::WrongArity(values.len()));
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(ActionError::NonFinite(i));
            }
            let v: Vec<f64> = values.iter().copied().map(clamp_unit).collect();
            let channels = |o: usize| CursorChannels {
                mv: Vec3::new(v[o], v[o + 1], v[o + 2]),
                rot: Vec3::new(v[o + 3], v[o + 4], v[o + 5]),
                grip: Grip::Level(v[o + 6]),
            };
            Ok(CursorCommand { cursors: [channels(0), channels(7)], connect: v[14] })
        }
        (Action::Discrete(id), ActionMode::Discrete) => {
            let id = *id;
            if !(0..DISCRETE_ACTIONS).contains(&id) {
                return Err(ActionError::OutOfRange(id));
            }
            let mut cmd = CursorCommand { cursors: [CursorChannels::IDLE; 2], connect: 0.0 };
            if id == DISCRETE_CONNECT {
                cmd.connect = 1.0;
                return Ok(cmd);
            }
            let cursor = (id / PRIMITIVES_PER_CURSOR) as usize;
            let prim = id % PRIMITIVES_PER_CURSOR;
            let ch = &mut cmd.cursors[cursor];
            let sign = if prim % 2 == 0 { 1.0 } else { -1.0 };
            let unit = |axis: i64| match axis {
                0 => Vec3::X,
                1 => Vec3::Y,
                _ => Vec3::Z,
            };
            match prim {
                0..=5 => ch.mv = unit(prim / 2) * sign,
                6..=11 => ch.rot = unit((prim - 6) / 2) * sign,
                12 => ch.grip = Grip::Toggle,
                _ => ch.grip = Grip::Level(-1.0),
            }
            Ok(cmd)
        }
        (Action::Continuous(_), mode) => Err(ActionError::ModeMismatch { mode, got: ActionMode::Continuous }),
        (Action::Discrete(_), mode) => Err(ActionError::ModeMismatch { mode, got: ActionMode::Discrete }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { min: Vec3::new(-1.25, -1.25, 0.0), max: Vec3::new(1.25, 1.25, 1.5) }
    }
}

impl Workspace {
    pub fn contains(&self, p: Vec3) -> bool {
        p.clamp(self.min, self.max) == p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Meters per unit of move command.
    pub move_step: f64,
    /// Radians per unit of rotation command.
    pub rot_step: f64,
    pub collision_check: bool,
    pub settle: bool,
    pub workspace: Workspace,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            move_step: 0.02,
            rot_step: 3f64.to_radians(),
            collision_check: false,
            settle: false,
            workspace: Workspace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentEvent {
    Grasp { cursor: usize, part: String },
    GraspNone { cursor: usize },
    Release { cursor: usize, part: String },
    Clamped { cursor: usize },
    Blocked { cursor: usize, motion: Motion },
    Settled { cursor: usize, part: String, drop: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Move,
    Rotate,
}

/// Parts whose world AABB touches a cube centred at `pos`, sorted.
pub fn holdable_at(state: &AssemblyState, m: &FurnitureModel, pos: Vec3, half_extent: f64) -> Vec<String> {
    let cube = Aabb::around(pos, Vec3::splat(half_extent));
    state
        .part_ids()
        .filter(|p| state.part_aabb(m, p).is_some_and(|bb| bb.intersects(&cube)))
        .map(str::to_string)
        .collect()
}

pub fn holdable_parts(state: &AssemblyState, m: &FurnitureModel, cursor: usize) -> Vec<String> {
    let c = &state.cursors[cursor];
    holdable_at(state, m, c.pos, c.half_extent)
}

fn group_poses(state: &AssemblyState, part: &str) -> Vec<(String, Pose)> {
    state
        .weld
        .members(part)
        .into_iter()
        .map(|id| (id.to_string(), state.poses[id]))
        .collect()
}

fn restore(state: &mut AssemblyState, saved: Vec<(String, Pose)>) {
    for (id, pose) in saved {
        state.poses.insert(id, pose);
    }
}

fn lowest_point(state: &AssemblyState, m: &FurnitureModel, part: &str) -> f64 {
    state
        .weld
        .members(part)
        .into_iter()
        .filter_map(|p| state.part_aabb(m, p))
        .map(|bb| bb.min.z)
        .fold(f64::INFINITY, f64::min)
}

/// Drops a released group along -z until it rests on the floor or on
/// another group. Returns the distance dropped.
fn settle_group(state: &mut AssemblyState, m: &FurnitureModel, part: &str) -> f64 {
    let lowest = lowest_point(state, m, part);
    if !(lowest > 0.0 && lowest.is_finite()) {
        return 0.0;
    }
    let saved = group_poses(state, part);
    let blocked_at = |state: &mut AssemblyState, drop: f64| {
        restore(state, saved.clone());
        transform_group(state, part, Pose::translation(Vec3::new(0.0, 0.0, -drop)), Vec3::ZERO)
            .expect("group exists");
        collide(state, m, part)
    };
    // March down in small increments to catch thin obstacles, then bisect.
    const MARCH: f64 = 0.005;
    let mut free = 0.0;
    let mut hit = None;
    let mut d = MARCH.min(lowest);
    loop {
        if blocked_at(state, d) {
            hit = Some(d);
            break;
        }
        free = d;
        if d >= lowest {
            break;
        }
        d = (d + MARCH).min(lowest);
    }
    if let Some(mut hi) = hit {
        for _ in 0..40 {
            let mid = 0.5 * (free + hi);
            if blocked_at(state, mid) {
                hi = mid;
            } else {
                free = mid;
            }
        }
    }
    restore(state, saved);
    if free > 0.0 {
        transform_group(state, part, Pose::translation(Vec3::new(0.0, 0.0, -free)), Vec3::ZERO)
            .expect("group exists");
    }
    free
}

fn release(state: &mut AssemblyState, m: &FurnitureModel, cfg: &AgentConfig, i: usize, events: &mut Vec<AgentEvent>) {
    let Some(part) = state.cursors[i].held.take() else { return };
    events.push(AgentEvent::Release { cursor: i, part: part.clone() });
    if cfg.settle && !state.group_held(&part) {
        let drop = settle_group(state, m, &part);
        if drop > 0.0 {
            events.push(AgentEvent::Settled { cursor: i, part, drop });
        }
    }
}

fn grasp(state: &mut AssemblyState, m: &FurnitureModel, i: usize, events: &mut Vec<AgentEvent>) {
    match holdable_parts(state, m, i).into_iter().next() {
        Some(part) => {
            state.cursors[i].held = Some(part.clone());
            events.push(AgentEvent::Grasp { cursor: i, part });
        }
        None => events.push(AgentEvent::GraspNone { cursor: i }),
    }
}

/// Applies both cursors' channels in order 0, 1. The connect channel is not
/// handled here.
pub fn apply_cursor_command(
    state: &mut AssemblyState,
    m: &FurnitureModel,
    cmd: &CursorCommand,
    cfg: &AgentConfig,
) -> Vec<AgentEvent> {
    let mut events = Vec::new();
    for (i, ch) in cmd.cursors.iter().enumerate() {
        let holding = state.cursors[i].held.is_some();
        match ch.grip {
            Grip::Level(v) if v > 0.0 && !holding => grasp(state, m, i, &mut events),
            Grip::Level(v) if v <= 0.0 && holding => release(state, m, cfg, i, &mut events),
            Grip::Toggle if holding => release(state, m, cfg, i, &mut events),
            Grip::Toggle => grasp(state, m, i, &mut events),
            _ => {}
        }

        if ch.mv != Vec3::ZERO {
            let from = state.cursors[i].pos;
            let wanted = from + ch.mv * cfg.move_step;
            let to = wanted.clamp(cfg.workspace.min, cfg.workspace.max);
            let delta = to - from;
            let mut blocked = false;
            if let Some(held) = state.cursors[i].held.clone() {
                let saved = group_poses(state, &held);
                transform_group(state, &held, Pose::translation(delta), Vec3::ZERO).expect("held group exists");
                if cfg.collision_check && collide(state, m, &held) {
                    restore(state, saved);
                    blocked = true;
                }
            }
            if blocked {
                events.push(AgentEvent::Blocked { cursor: i, motion: Motion::Move });
            } else {
                state.cursors[i].pos = to;
                if to != wanted {
                    events.push(AgentEvent::Clamped { cursor: i });
                }
            }
        }

        if ch.rot != Vec3::ZERO {
            if let Some(held) = state.cursors[i].held.clone() {
                let q = UnitQuat::from_rotation_vector(ch.rot * cfg.rot_step);
                let saved = group_poses(state, &held);
                let pivot = state.cursors[i].pos;
                transform_group(state, &held, Pose::rotation(q), pivot).expect("held group exists");
                if cfg.collision_check && collide(state, m, &held) {
                    restore(state, saved);
                    events.push(AgentEvent::Blocked { cursor: i, motion: Motion::Rotate });
                }
            }
        }
    }
    events
}
