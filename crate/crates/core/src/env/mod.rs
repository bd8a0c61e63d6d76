//! Gym-style episodes: make / reset / step / observe.

mod layout;
mod rng;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layout::{
    choose_subset, place_parts, randomize_layout, LayoutOptions, OrientationRandomization, PlacementFailed,
    MAX_PLACEMENT_ATTEMPTS, SPAWN_HALF_WIDTH,
};
pub use rng::CounterRng;

use crate::agents::{apply_cursor_command, decode_action, Action, ActionError, ActionMode, AgentConfig, AgentEvent, CursorState};
use crate::assembly::{
    connect, connector_world_frame, scan_attachable, AlignmentThresholds, AssemblyState, AttachabilityResult,
    ConnectEvent,
};
use crate::geom::{UnitQuat, Vec3};
use crate::model::{resolve_model, validate_model, CatalogError, FurnitureModel, MatePair};

pub const CURSOR_HOMES: [Vec3; 2] = [Vec3::new(-0.3, 0.0, 0.3), Vec3::new(0.3, 0.0, 0.3)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub connect_reward: f64,
    pub success_bonus: f64,
    pub step_penalty: f64,
    /// Adds `-shaping_scale * min distance` over unconnected scene pairs.
    pub dense_shaping: bool,
    pub shaping_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { connect_reward: 1.0, success_bonus: 0.0, step_penalty: 0.0, dense_shaping: false, shaping_scale: 0.1 }
    }
}

fn default_max_steps() -> u64 {
    500
}
fn default_move_step() -> f64 {
    AgentConfig::default().move_step
}
fn default_rot_step() -> f64 {
    AgentConfig::default().rot_step
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub model: String,
    #[serde(default)]
    pub mode: ActionMode,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// `None` uses the model's own thresholds, else the defaults.
    #[serde(default)]
    pub thresholds: Option<AlignmentThresholds>,
    #[serde(default = "default_move_step")]
    pub move_step: f64,
    #[serde(default = "default_rot_step")]
    pub rot_step: f64,
    #[serde(default)]
    pub collision_check: bool,
    #[serde(default)]
    pub settle: bool,
    #[serde(default)]
    pub random_subset: bool,
    #[serde(default)]
    pub orientation_randomization: OrientationRandomization,
    #[serde(default)]
    pub reward: RewardConfig,
}

impl EpisodeConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            mode: ActionMode::default(),
            max_steps: default_max_steps(),
            thresholds: None,
            move_step: default_move_step(),
            rot_step: default_rot_step(),
            collision_check: false,
            settle: false,
            random_subset: false,
            orientation_randomization: OrientationRandomization::default(),
            reward: RewardConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        for (name, v) in [("move_step", self.move_step), ("rot_step", self.rot_step)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if let Some(t) = &self.thresholds {
            t.check().map_err(EnvError::InvalidConfig)?;
        }
        let r = &self.reward;
        for (name, v) in [
            ("reward.connect_reward", r.connect_reward),
            ("reward.success_bonus", r.success_bonus),
            ("reward.step_penalty", r.step_penalty),
            ("reward.shaping_scale", r.shaping_scale),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Model(#[from] CatalogError),
    #[error("model `{name}` is invalid: {detail}")]
    InvalidModel { name: String, detail: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode is done; reset before stepping")]
    EpisodeDone,
    #[error("bad action: {0}")]
    BadAction(#[from] ActionError),
    #[error(transparent)]
    Placement(#[from] PlacementFailed),
}

impl EnvError {
    /// Machine-readable error code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            EnvError::Model(CatalogError::UnknownModel(_)) => "unknown_model",
            EnvError::Model(_) | EnvError::InvalidModel { .. } => "invalid_model",
            EnvError::InvalidConfig(_) => "invalid_config",
            EnvError::NotReset | EnvError::EpisodeDone => "not_reset",
            EnvError::BadAction(_) => "bad_action",
            EnvError::Placement(_) => "placement_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartObs {
    pub id: String,
    pub pos: Vec3,
    pub quat: UnitQuat,
    /// Canonical root of the part's weld group.
    pub root: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CursorObs {
    pub pos: Vec3,
    pub held: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachableObs {
    pub pair: String,
    pub distance: f64,
    pub up_sim: f64,
    pub forward_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub parts: Vec<PartObs>,
    pub cursors: Vec<CursorObs>,
    /// Currently attachable pairs, in pair order.
    pub attachable: Vec<AttachableObs>,
    pub connected_count: usize,
    pub step: u64,
}

impl Observation {
    pub fn part(&self, id: &str) -> Option<&PartObs> {
        self.parts.iter().find(|p| p.id == id)
    }

    pub fn canonical_json(&self) -> String {
        crate::record::canonical_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum StepEvent {
    Agent(AgentEvent),
    Connect(ConnectEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepInfo {
    pub events: Vec<StepEvent>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// `connect_reward` per connection, `success_bonus` on the step that completes
/// the assembly, minus `step_penalty`, plus the optional dense term.
pub fn compute_reward(events: &[StepEvent], state: &AssemblyState, m: &FurnitureModel, cfg: &RewardConfig) -> f64 {
    let connections = events
        .iter()
        .filter(|e| matches!(e, StepEvent::Connect(ConnectEvent::Connected { .. })))
        .count();
    let mut r = cfg.connect_reward * connections as f64 - cfg.step_penalty;
    if connections > 0 && state.is_fully_connected() {
        r += cfg.success_bonus;
    }
    if cfg.dense_shaping {
        let nearest = state
            .scene_pairs(m)
            .iter()
            .filter(|p| !state.connected_pairs.contains(p))
            .filter_map(|p| {
                let a = connector_world_frame(state, m, &p.a).ok()?;
                let b = connector_world_frame(state, m, &p.b).ok()?;
                Some((a.pos - b.pos).norm())
            })
            .fold(f64::INFINITY, f64::min);
        if nearest.is_finite() {
            r -= cfg.shaping_scale * nearest;
        }
    }
    r
}

/// All `active` parts share one weld group.
pub fn is_success(state: &AssemblyState, active: &[&str]) -> bool {
    match active.split_first() {
        Some((first, rest)) => rest.iter().all(|p| state.weld.same_group(first, p)),
        None => true,
    }
}

#[derive(Debug, Clone)]
struct Episode {
    seed: u64,
    state: AssemblyState,
    attachable: Vec<(MatePair, AttachabilityResult)>,
    step: u64,
    done: bool,
    success: bool,
}

/// One environment instance. Not thread-safe by design: confine it to a
/// single session.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EpisodeConfig,
    model: Arc<FurnitureModel>,
    thresholds: AlignmentThresholds,
    agent: AgentConfig,
    episode: Option<Episode>,
}

impl Env {
    pub fn make(cfg: EpisodeConfig) -> Result<Env, EnvError> {
        cfg.validate()?;
        let model = resolve_model(&cfg.model)?;
        Self::with_model(cfg, model)
    }

    /// Like [`Env::make`] with an already loaded model (`cfg.model` is kept
    /// as the recorded name).
    pub fn with_model(cfg: EpisodeConfig, model: Arc<FurnitureModel>) -> Result<Env, EnvError> {
        cfg.validate()?;
        let diag = validate_model(&model);
        if !diag.is_valid() {
            let detail = diag.errors.iter().map(|d| format!("{}: {}", d.path, d.message)).collect::<Vec<_>>().join("; ");
            return Err(EnvError::InvalidModel { name: model.name.clone(), detail });
        }
        let thresholds = cfg.thresholds.or(model.thresholds).unwrap_or_default();
        let agent = AgentConfig {
            move_step: cfg.move_step,
            rot_step: cfg.rot_step,
            collision_check: cfg.collision_check,
            settle: cfg.settle,
            ..AgentConfig::default()
        };
        Ok(Env { cfg, model, thresholds, agent, episode: None })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Arc<FurnitureModel> {
        &self.model
    }

    pub fn thresholds(&self) -> &AlignmentThresholds {
        &self.thresholds
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.agent
    }

    pub fn state(&self) -> Option<&AssemblyState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn seed(&self) -> Option<u64> {
        self.episode.as_ref().map(|e| e.seed)
    }

    pub fn step_count(&self) -> u64 {
        self.episode.as_ref().map_or(0, |e| e.step)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    pub fn is_success(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.success)
    }

    /// Parts spawned this episode, sorted.
    pub fn active_parts(&self) -> Vec<&str> {
        self.state().map(|s| s.part_ids().collect()).unwrap_or_default()
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        let mut rng = CounterRng::new(seed);
        let opts = LayoutOptions {
            random_subset: self.cfg.random_subset,
            orientation: self.cfg.orientation_randomization,
        };
        let poses = randomize_layout(&self.model, &mut rng, opts)?;
        let state = AssemblyState::new(poses, CURSOR_HOMES.map(CursorState::at));
        let attachable = scan_attachable(&state, &self.model, &self.thresholds);
        self.episode = Some(Episode { seed, state, attachable, step: 0, done: false, success: false });
        self.observe()
    }

    pub fn observe(&self) -> Result<Observation, EnvError> {
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        let s = &ep.state;
        let parts = s
            .poses
            .iter()
            .map(|(id, p)| PartObs {
                id: id.clone(),
                pos: p.pos,
                quat: p.rot,
                root: s.group_root(id).unwrap_or(id).to_string(),
            })
            .collect();
        let cursors = s.cursors.iter().map(|c| CursorObs { pos: c.pos, held: c.held.clone() }).collect();
        let attachable = ep
            .attachable
            .iter()
            .filter(|(_, r)| r.attachable)
            .map(|(p, r)| AttachableObs { pair: p.id(), distance: r.distance, up_sim: r.up_sim, forward_sim: r.forward_sim })
            .collect();
        Ok(Observation { parts, cursors, attachable, connected_count: s.connected_pairs.len(), step: ep.step })
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeDone);
        }
        let cmd = decode_action(action, self.cfg.mode)?;
        let mut events: Vec<StepEvent> = apply_cursor_command(&mut ep.state, &self.model, &cmd, &self.agent)
            .into_iter()
            .map(StepEvent::Agent)
            .collect();
        if cmd.connect_requested() {
            let ev = connect(&mut ep.state, &self.model, &self.thresholds, None)
                .expect("connect without an explicit pair cannot fail");
            events.push(StepEvent::Connect(ev));
        }
        ep.attachable = scan_attachable(&ep.state, &self.model, &self.thresholds);
        let reward = compute_reward(&events, &ep.state, &self.model, &self.cfg.reward);
        ep.step += 1;
        let active: Vec<&str> = ep.state.part_ids().collect();
        ep.success = is_success(&ep.state, &active);
        ep.done = ep.success || ep.step >= self.cfg.max_steps;
        let (done, success) = (ep.done, ep.success);
        Ok(StepResult { obs: self.observe()?, reward, done, info: StepInfo { events, success } })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;

    fn null() -> Action {
        Action::null(ActionMode::Continuous)
    }

    #[test]
    fn make_errors() {
        assert!(Env::make(EpisodeConfig::new("block")).is_ok());
        let e = Env::make(EpisodeConfig::new("nonexistent")).unwrap_err();
        assert_eq!(e.code(), "unknown_model");
        let e = Env::make(EpisodeConfig { max_steps: 0, ..EpisodeConfig::new("block") }).unwrap_err();
        assert_eq!(e.code(), "invalid_config");
        let e = Env::make(EpisodeConfig { move_step: -1.0, ..EpisodeConfig::new("block") }).unwrap_err();
        assert_eq!(e.code(), "invalid_config");
        let bad_t = AlignmentThresholds { epsilon_up: 2.0, ..Default::default() };
        let e = Env::make(EpisodeConfig { thresholds: Some(bad_t), ..EpisodeConfig::new("block") }).unwrap_err();
        assert_eq!(e.code(), "invalid_config");
    }

    #[test]
    fn step_before_reset() {
        let mut env = Env::make(EpisodeConfig::new("block")).unwrap();
        assert!(matches!(env.step(&null()), Err(EnvError::NotReset)));
        assert!(matches!(env.observe(), Err(EnvError::NotReset)));
    }

    #[test]
    fn reset_is_deterministic_and_seed_sensitive() {
        let mut env = Env::make(EpisodeConfig::new("table_simple")).unwrap();
        let a = env.reset(1).unwrap();
        let b = env.reset(1).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
        let c = env.reset(2).unwrap();
        assert!(a.parts.iter().zip(&c.parts).any(|(x, y)| x.pos != y.pos));
        assert_eq!(a.step, 0);
        assert_eq!(a.cursors[0].pos, CURSOR_HOMES[0]);
    }

    #[test]
    fn reset_block_gives_singletons() {
        let mut env = Env::make(EpisodeConfig::new("block")).unwrap();
        let obs = env.reset(0).unwrap();
        assert_eq!(obs.parts.len(), 2);
        assert!(obs.parts.iter().all(|p| p.root == p.id));
        assert_eq!(env.state().unwrap().weld.group_count(), 2);
        assert!(!env.is_success());
    }

    #[test]
    fn null_step_and_timeout() {
        let mut env = Env::make(EpisodeConfig { max_steps: 3, ..EpisodeConfig::new("block") }).unwrap();
        env.reset(0).unwrap();
        for i in 1..=3 {
            let r = env.step(&null()).unwrap();
            assert_eq!(r.reward, 0.0);
            assert_eq!(r.done, i == 3);
            assert!(!r.info.success);
            assert_eq!(r.obs.step, i);
        }
        assert!(matches!(env.step(&null()), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn bad_actions_leave_state() {
        let mut env = Env::make(EpisodeConfig::new("block")).unwrap();
        env.reset(0).unwrap();
        let before = env.observe().unwrap();
        let e = env.step(&Action::Continuous(vec![0.0; 3])).unwrap_err();
        assert_eq!(e.code(), "bad_action");
        let e = env.step(&Action::Discrete(0)).unwrap_err();
        assert_eq!(e.code(), "bad_action");
        assert_eq!(env.observe().unwrap(), before);
    }

    /// Places block_b so its connector sits 1 cm from block_a's, then connects.
    #[test]
    fn scripted_connect_scenario() {
        let mut env = Env::make(EpisodeConfig::new("block")).unwrap();
        env.reset(0).unwrap();
        {
            let ep = env.episode.as_mut().unwrap();
            ep.state.poses.insert("block_a".into(), Pose::translation(Vec3::new(0.0, 0.0, 0.05)));
            ep.state.poses.insert("block_b".into(), Pose::translation(Vec3::new(0.01, 0.0, 0.2)));
        }
        // Not yet attachable: b's bottom is at z 0.15, a's top at 0.1.
        let r = env.step(&null()).unwrap();
        assert!(r.obs.attachable.is_empty());
        // Put cursor 1 inside b, then hold and lower it 2 cm per step.
        env.episode.as_mut().unwrap().state.cursors[1].pos = Vec3::new(0.01, 0.0, 0.2);
        let mut hold_down = vec![0.0; 15];
        hold_down[13] = 1.0;
        hold_down[9] = -1.0;
        let r = env.step(&Action::Continuous(hold_down.clone())).unwrap();
        assert_eq!(r.obs.cursors[1].held.as_deref(), Some("block_b"));
        let r = env.step(&Action::Continuous(hold_down)).unwrap();
        assert_eq!(r.obs.attachable.len(), 1);
        assert!((r.obs.attachable[0].distance - (0.01f64.powi(2) + 0.01f64.powi(2)).sqrt()).abs() < 1e-12);
        let mut conn = vec![0.0; 15];
        conn[13] = 1.0;
        conn[14] = 1.0;
        let r = env.step(&Action::Continuous(conn)).unwrap();
        assert_eq!(r.reward, 1.0);
        assert_eq!(r.obs.connected_count, 1);
        assert!(r.done && r.info.success);
        let b = env.state().unwrap().poses["block_b"].pos;
        assert!((b - Vec3::new(0.0, 0.0, 0.15)).max_abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        let m = crate::model::bundled_model("block").unwrap();
        let mut env = Env::with_model(EpisodeConfig::new("block"), m.clone()).unwrap();
        env.reset(0).unwrap();
        let state = env.state().unwrap().clone();
        let defaults = RewardConfig::default();
        assert_eq!(compute_reward(&[], &state, &m, &defaults), 0.0);
        let connected = StepEvent::Connect(ConnectEvent::Connected {
            pair: "block_a.top|block_b.bottom".into(),
            moved_root: "block_b".into(),
            distance: 0.0,
        });
        // One connection on a not-yet-complete state.
        assert_eq!(compute_reward(std::slice::from_ref(&connected), &state, &m, &defaults), 1.0);
        let mut done = state.clone();
        done.weld.union("block_a", "block_b");
        let bonus = RewardConfig { success_bonus: 5.0, ..defaults.clone() };
        assert_eq!(compute_reward(&[connected], &done, &m, &bonus), 6.0);
        let pen = RewardConfig { step_penalty: 0.01, ..defaults.clone() };
        assert_eq!(compute_reward(&[], &state, &m, &pen), -0.01);
        let dense = RewardConfig { dense_shaping: true, ..defaults };
        let a = connector_world_frame(&state, &m, &"block_a.top".parse().unwrap()).unwrap().pos;
        let b = connector_world_frame(&state, &m, &"block_b.bottom".parse().unwrap()).unwrap().pos;
        let r = compute_reward(&[], &state, &m, &dense);
        assert!((r + 0.1 * (a - b).norm()).abs() < 1e-15);
    }

    #[test]
    fn success_predicate() {
        let mut env = Env::make(EpisodeConfig::new("table_simple")).unwrap();
        env.reset(0).unwrap();
        let mut s = env.state().unwrap().clone();
        let all: Vec<String> = s.part_ids().map(str::to_string).collect();
        let all: Vec<&str> = all.iter().map(String::as_str).collect();
        assert!(!is_success(&s, &all));
        for leg in ["leg_1", "leg_2", "leg_3"] {
            s.weld.union("board", leg);
        }
        assert!(!is_success(&s, &all));
        s.weld.union("board", "leg_4");
        assert!(is_success(&s, &all));
    }

    #[test]
    fn random_subset_on_two_parts_spawns_both() {
        let mut env = Env::make(EpisodeConfig { random_subset: true, ..EpisodeConfig::new("block") }).unwrap();
        for seed in 0..10 {
            assert_eq!(env.reset(seed).unwrap().parts.len(), 2);
        }
    }

    #[test]
    fn config_serde_defaults_and_unknown_fields() {
        let c: EpisodeConfig = serde_json::from_str(r#"{"model": "block"}"#).unwrap();
        assert_eq!(c, EpisodeConfig::new("block"));
        let c: EpisodeConfig =
            serde_json::from_str(r#"{"model": "block", "mode": "discrete", "orientation_randomization": "full"}"#).unwrap();
        assert_eq!(c.mode, ActionMode::Discrete);
        assert!(serde_json::from_str::<EpisodeConfig>(r#"{"model": "block", "bogus": 1}"#).is_err());
        let back: EpisodeConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
