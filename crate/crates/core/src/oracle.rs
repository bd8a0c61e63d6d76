//! Scripted greedy assembly (grasp → align → attach) driven purely through
//! the action interface, plus a uniform random policy.
//!
//! The oracle uses cursor 1 only. Its decisions are a function of the
//! current observation and the plan; nothing else is carried between calls.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::agents::{
    holdable_at, Action, ActionMode, AgentConfig, CursorState, CONTINUOUS_ARITY, DEFAULT_CURSOR_HALF_EXTENT,
    DISCRETE_ACTIONS, DISCRETE_CONNECT, PRIMITIVES_PER_CURSOR,
};
use crate::assembly::{connector_world_frame, snap_transform, AssemblyState};
use crate::env::{CounterRng, Env, Observation};
use crate::geom::{Pose, UnitQuat, Vec3};
use crate::model::{ConnectorRef, FurnitureModel, MatePair};
use crate::record::{state_digest, StepEntry};

/// Clearance above the target connector used when collision checking is on.
pub const LIFT_HEIGHT: f64 = 0.15;
const ORACLE_CURSOR: usize = 1;
/// Cursor is considered at its grasp point within this distance per axis.
const ARRIVAL_TOLERANCE: f64 = 1e-6;

pub trait Policy {
    /// Called after every reset, before the first `act`.
    fn reset(&mut self, _env: &Env) {}
    fn act(&mut self, obs: &Observation) -> Action;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanStep {
    pub pair: MatePair,
    /// Connector on the side already in the base group.
    pub target: ConnectorRef,
    pub moving: ConnectorRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssemblyPlan {
    pub base: String,
    pub steps: Vec<PlanStep>,
}

impl AssemblyPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no parts spawned")]
    Empty,
    #[error("spawned parts are not connected in the goal assembly; unreachable from `{base}`: {unreachable:?}")]
    Disconnected { base: String, unreachable: Vec<String> },
}

/// Breadth-first traversal of the goal tree from the smallest spawned part.
pub fn plan(m: &FurnitureModel, spawned: &[&str]) -> Result<AssemblyPlan, PlanError> {
    let spawned: BTreeSet<&str> = spawned.iter().copied().collect();
    let base = *spawned.iter().next().ok_or(PlanError::Empty)?;
    let pairs = m.mate_pairs_within(&spawned.iter().copied().collect::<Vec<_>>());
    let mut seen = BTreeSet::from([base]);
    let mut queue = VecDeque::from([base]);
    let mut steps = Vec::new();
    while let Some(p) = queue.pop_front() {
        for pair in pairs.iter().filter(|pr| pr.involves_part(p)) {
            let (mine, other) = if pair.a.part() == p { (&pair.a, &pair.b) } else { (&pair.b, &pair.a) };
            if seen.insert(other.part()) {
                steps.push(PlanStep { pair: pair.clone(), target: mine.clone(), moving: other.clone() });
                queue.push_back(other.part());
            }
        }
    }
    if seen.len() < spawned.len() {
        let unreachable = spawned.difference(&seen).map(|s| s.to_string()).collect();
        return Err(PlanError::Disconnected { base: base.to_string(), unreachable });
    }
    Ok(AssemblyPlan { base: base.to_string(), steps })
}

/// Everything the oracle needs besides the observation.
#[derive(Debug, Clone)]
pub struct OracleContext {
    pub model: Arc<FurnitureModel>,
    pub plan: AssemblyPlan,
    pub agent: AgentConfig,
    pub mode: ActionMode,
}

impl OracleContext {
    pub fn for_env(env: &Env) -> Result<Self, PlanError> {
        Ok(Self {
            model: env.model().clone(),
            plan: plan(env.model(), &env.active_parts())?,
            agent: *env.agent_config(),
            mode: env.config().mode,
        })
    }
}

/// Rebuilds enough of the episode state from an observation to reason about
/// frames and grasping.
fn observed_state(obs: &Observation) -> AssemblyState {
    let poses = obs.parts.iter().map(|p| (p.id.clone(), Pose::new(p.pos, p.quat))).collect();
    let cursor = |i: usize| {
        obs.cursors.get(i).map_or(CursorState::at(Vec3::ZERO), |c| CursorState {
            pos: c.pos,
            held: c.held.clone(),
            half_extent: DEFAULT_CURSOR_HALF_EXTENT,
        })
    };
    let mut s = AssemblyState::new(poses, [cursor(0), cursor(1)]);
    for p in &obs.parts {
        s.weld.union(&p.id, &p.root);
    }
    s
}

/// Scales `v` so that no component exceeds 1 in magnitude, keeping its
/// direction.
fn unit_box_scale(v: Vec3) -> Vec3 {
    let m = v.max_abs();
    if m > 1.0 {
        v / m
    } else {
        v
    }
}

/// A cursor position from which grasping is guaranteed to pick a part of
/// `part`'s group, with slack of `slack` per axis for inexact arrival.
fn grasp_point(state: &AssemblyState, m: &FurnitureModel, part: &str, slack: f64, agent: &AgentConfig) -> Vec3 {
    let he = DEFAULT_CURSOR_HALF_EXTENT;
    let members: Vec<&str> = state.weld.members(part);
    let ok = |g: Vec3| {
        let wide = holdable_at(state, m, g, he + slack);
        let narrow = holdable_at(state, m, g, (he - slack).max(0.0));
        wide.first().is_some_and(|p| members.contains(&p.as_str()))
            && narrow.iter().any(|p| members.contains(&p.as_str()))
    };
    let mut candidates = Vec::new();
    for &id in &members {
        let Some(bb) = state.part_aabb(m, id) else { continue };
        candidates.push((bb.min + bb.max) * 0.5);
        candidates.extend(state.part_shapes(m, id).iter().map(|s| s.center()));
        for fx in [0.25, 0.5, 0.75] {
            for fy in [0.25, 0.5, 0.75] {
                for fz in [0.25, 0.5, 0.75] {
                    let f = Vec3::new(fx, fy, fz);
                    let span = bb.max - bb.min;
                    candidates.push(bb.min + Vec3::new(span.x * f.x, span.y * f.y, span.z * f.z));
                }
            }
        }
    }
    let ws = agent.workspace;
    let candidates: Vec<Vec3> = candidates.into_iter().map(|c| c.clamp(ws.min, ws.max)).collect();
    candidates.iter().copied().find(|&g| ok(g)).or_else(|| candidates.first().copied()).unwrap_or(Vec3::ZERO)
}

/// What the oracle wants cursor 1 to do this step.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Intent {
    Idle,
    Connect,
    Release,
    Grasp,
    /// Move the (empty) cursor by this world displacement.
    Travel(Vec3),
    /// Carry the held group: rotate by `rot` (rotation vector, about the
    /// cursor) and translate the cursor so the moving connector reaches `goal`.
    Carry { rot: Vec3, connector: Vec3, goal: Vec3 },
}

fn intent(ctx: &OracleContext, obs: &Observation) -> Intent {
    let m = &*ctx.model;
    let state = observed_state(obs);
    let Some(next) = ctx.plan.steps.iter().find(|s| !state.weld.same_group(s.moving.part(), s.target.part())) else {
        return Intent::Idle;
    };
    let pair_id = next.pair.id();
    if obs.attachable.iter().any(|a| a.pair == pair_id) {
        return Intent::Connect;
    }
    let cursor = &state.cursors[ORACLE_CURSOR];
    let moving_part = next.moving.part();
    match cursor.held.as_deref() {
        Some(h) if !state.weld.same_group(h, moving_part) => Intent::Release,
        None => {
            let slack = match ctx.mode {
                ActionMode::Continuous => ARRIVAL_TOLERANCE,
                ActionMode::Discrete => ctx.agent.move_step,
            };
            let g = grasp_point(&state, m, moving_part, slack, &ctx.agent);
            let d = g - cursor.pos;
            let arrived = match ctx.mode {
                ActionMode::Continuous => d.max_abs() <= ARRIVAL_TOLERANCE,
                ActionMode::Discrete => d.max_abs() <= 0.5 * ctx.agent.move_step + 1e-12,
            };
            if arrived {
                Intent::Grasp
            } else {
                Intent::Travel(d)
            }
        }
        Some(_) => {
            let (Ok(tf), Ok(mf)) =
                (connector_world_frame(&state, m, &next.target), connector_world_frame(&state, m, &next.moving))
            else {
                return Intent::Idle;
            };
            let snap = snap_transform(&tf, &mf, m.pair_symmetry(&next.pair));
            let p = mf.pos;
            let mut goal = tf.pos;
            if ctx.agent.collision_check {
                // Approach from above: rise, traverse, then descend.
                let lift_z = tf.pos.z + LIFT_HEIGHT;
                let horizontal = Vec3::new(tf.pos.x - p.x, tf.pos.y - p.y, 0.0).norm();
                if horizontal > 0.01 {
                    goal = if p.z < lift_z - 0.005 { Vec3::new(p.x, p.y, lift_z) } else { Vec3::new(tf.pos.x, tf.pos.y, lift_z) };
                }
            }
            Intent::Carry { rot: snap.rot.to_rotation_vector(), connector: p, goal }
        }
    }
}

fn continuous_action(ctx: &OracleContext, obs: &Observation, it: Intent) -> Action {
    let mut a = vec![0.0; CONTINUOUS_ARITY];
    let o = 7 * ORACLE_CURSOR;
    let holding = obs.cursors.get(ORACLE_CURSOR).is_some_and(|c| c.held.is_some());
    a[o + 6] = if holding { 1.0 } else { -1.0 };
    match it {
        Intent::Idle => {}
        Intent::Connect => a[14] = 1.0,
        Intent::Release => a[o + 6] = -1.0,
        Intent::Grasp => a[o + 6] = 1.0,
        Intent::Travel(d) => {
            let mv = unit_box_scale(d / ctx.agent.move_step);
            a[o..o + 3].copy_from_slice(&mv.to_array());
        }
        Intent::Carry { rot, connector, goal } => {
            let r = unit_box_scale(rot / ctx.agent.rot_step);
            let step_rot = UnitQuat::from_rotation_vector(r * ctx.agent.rot_step);
            let c = obs.cursors[ORACLE_CURSOR].pos;
            let d = goal - c - step_rot.rotate(connector - c);
            let mv = unit_box_scale(d / ctx.agent.move_step);
            a[o..o + 3].copy_from_slice(&mv.to_array());
            a[o + 3..o + 6].copy_from_slice(&r.to_array());
        }
    }
    Action::Continuous(a)
}

/// Discrete id moving along `axis` (0..3) in direction `sign`.
fn discrete_axis(base: i64, axis: usize, sign: f64) -> Action {
    Action::Discrete(PRIMITIVES_PER_CURSOR * ORACLE_CURSOR as i64 + base + 2 * axis as i64 + i64::from(sign < 0.0))
}

fn largest_axis(v: Vec3) -> (usize, f64) {
    (0..3).map(|i| (i, v.axis(i))).fold((0, 0.0), |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best })
}

fn discrete_action(ctx: &OracleContext, it: Intent) -> Action {
    let cursor_base = PRIMITIVES_PER_CURSOR * ORACLE_CURSOR as i64;
    match it {
        // Releasing an empty cursor changes nothing.
        Intent::Idle => Action::Discrete(cursor_base + 13),
        Intent::Connect => Action::Discrete(DISCRETE_CONNECT),
        Intent::Release => Action::Discrete(cursor_base + 13),
        Intent::Grasp => Action::Discrete(cursor_base + 12),
        Intent::Travel(d) => {
            let (axis, x) = largest_axis(d);
            discrete_axis(0, axis, x)
        }
        Intent::Carry { rot, connector, goal } => {
            let (raxis, r) = largest_axis(rot);
            if r.abs() > 0.5 * ctx.agent.rot_step {
                return discrete_axis(6, raxis, r);
            }
            let (axis, x) = largest_axis(goal - connector);
            if x.abs() > 0.5 * ctx.agent.move_step {
                discrete_axis(0, axis, x)
            } else {
                // Within half a step on every axis yet not attachable: nothing
                // finer is available, so just try to connect.
                Action::Discrete(DISCRETE_CONNECT)
            }
        }
    }
}

/// One oracle decision for the current observation.
pub fn oracle_step(ctx: &OracleContext, obs: &Observation) -> Action {
    let it = intent(ctx, obs);
    match ctx.mode {
        ActionMode::Continuous => continuous_action(ctx, obs, it),
        ActionMode::Discrete => discrete_action(ctx, it),
    }
}

/// The oracle as a [`Policy`]. Without a usable plan it emits null actions.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    ctx: Option<OracleContext>,
    mode: ActionMode,
}

impl Oracle {
    pub fn for_env(env: &Env) -> Result<Self, PlanError> {
        Ok(Self { ctx: Some(OracleContext::for_env(env)?), mode: env.config().mode })
    }

    pub fn plan(&self) -> Option<&AssemblyPlan> {
        self.ctx.as_ref().map(|c| &c.plan)
    }
}

impl Policy for Oracle {
    fn reset(&mut self, env: &Env) {
        self.mode = env.config().mode;
        self.ctx = OracleContext::for_env(env).ok();
    }

    fn act(&mut self, obs: &Observation) -> Action {
        match &self.ctx {
            Some(ctx) => oracle_step(ctx, obs),
            None => Action::null(self.mode),
        }
    }
}

/// Uniform random actions from a counter-based stream.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: CounterRng,
    mode: ActionMode,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: CounterRng::new(seed), mode: ActionMode::Continuous }
    }
}

impl Policy for RandomPolicy {
    fn reset(&mut self, env: &Env) {
        self.mode = env.config().mode;
    }

    fn act(&mut self, _obs: &Observation) -> Action {
        match self.mode {
            ActionMode::Continuous => Action::Continuous((0..CONTINUOUS_ARITY).map(|_| self.rng.uniform(-1.0, 1.0)).collect()),
            ActionMode::Discrete => Action::Discrete(self.rng.index(DISCRETE_ACTIONS as usize) as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub success: bool,
    pub steps_used: u64,
    pub connections: usize,
    #[serde(skip)]
    pub trajectory: Option<Vec<StepEntry>>,
}

/// Drives a freshly reset `env` with the oracle for at most `budget` steps.
pub fn run_oracle(env: &mut Env, budget: u64) -> OracleOutcome {
    drive(env, budget, false)
}

/// As [`run_oracle`], keeping every step for writing out later.
pub fn run_oracle_recorded(env: &mut Env, budget: u64) -> OracleOutcome {
    drive(env, budget, true)
}

fn drive(env: &mut Env, budget: u64, keep: bool) -> OracleOutcome {
    let mut oracle = Oracle::default();
    oracle.reset(env);
    let mut trajectory = keep.then(Vec::new);
    let mut steps = 0;
    let mut obs = match env.observe() {
        Ok(o) => o,
        Err(_) => return OracleOutcome { success: false, steps_used: 0, connections: 0, trajectory },
    };
    while steps < budget && !env.is_done() {
        let action = oracle.act(&obs);
        let Ok(r) = env.step(&action) else { break };
        steps += 1;
        if let Some(t) = trajectory.as_mut() {
            let digest = state_digest(env.state().expect("running"));
            t.push(StepEntry::new(action, &r, digest, false));
        }
        obs = r.obs;
    }
    OracleOutcome { success: env.is_success(), steps_used: steps, connections: obs.connected_count, trajectory }
}
