//! State digests, trajectory files and deterministic replay.
//!
//! A trajectory is line-delimited JSON: one header line, then one line per
//! step. Every line is written in canonical form (sorted keys, shortest
//! round-trip floats). Each step also carries `chain`, a running SHA-256 over
//! the header and all step records so far, so that edits that do not move the
//! quantized state (e.g. a low mantissa bit of an action) are still caught.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::Action;
use crate::assembly::AssemblyState;
use crate::env::{Env, EnvError, EpisodeConfig, Observation, StepResult};
use crate::oracle::Policy;
use crate::ENGINE_VERSION;

pub const TRAJECTORY_VERSION: u32 = 1;
pub const TRAJECTORY_EXTENSION: &str = ".traj.jsonl";
/// Pose coordinates are rounded to this quantum before hashing.
pub const DIGEST_QUANTUM: f64 = 1e-9;

/// Sorted keys, shortest round-trip floats, no whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(v: &T) -> String {
    // serde_json's Map is a BTreeMap unless `preserve_order` is enabled,
    // so a round trip through Value sorts every object's keys.
    let value = serde_json::to_value(v).expect("serializable value");
    serde_json::to_string(&value).expect("value serializes")
}

fn quantize(v: f64) -> i64 {
    (v / DIGEST_QUANTUM).round() as i64
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 (hex) of the canonical, quantized episode state.
pub fn state_digest(state: &AssemblyState) -> String {
    let q3 = |v: crate::geom::Vec3| [quantize(v.x), quantize(v.y), quantize(v.z)];
    let poses: serde_json::Map<String, Value> = state
        .poses
        .iter()
        .map(|(id, p)| {
            let r = p.rot;
            let rot = [quantize(r.w()), quantize(r.x()), quantize(r.y()), quantize(r.z())];
            (id.clone(), json!({ "pos": q3(p.pos), "rot": rot }))
        })
        .collect();
    let roots: serde_json::Map<String, Value> =
        state.weld.root_map().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let cursors: Vec<Value> = state
        .cursors
        .iter()
        .map(|c| json!({ "pos": q3(c.pos), "held": c.held, "half_extent": quantize(c.half_extent) }))
        .collect();
    let connected: Vec<String> = state.connected_pairs.iter().map(|p| p.id()).collect();
    let doc = json!({ "poses": poses, "roots": roots, "cursors": cursors, "connected": connected });
    sha256_hex(canonical_json(&doc).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub version: u32,
    pub model: String,
    pub config: EpisodeConfig,
    pub seed: u64,
    pub engine: String,
}

impl TrajectoryHeader {
    pub fn new(config: EpisodeConfig, seed: u64) -> Self {
        Self { version: TRAJECTORY_VERSION, model: config.model.clone(), config, seed, engine: ENGINE_VERSION.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub t: u64,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Observation>,
    /// Absent in files from writers that do not chain; then only digests,
    /// rewards and done flags are checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
}

/// The chained fields of a step, hashed in canonical form.
#[derive(Serialize)]
struct ChainedFields<'a> {
    t: u64,
    action: &'a Action,
    reward: f64,
    done: bool,
    digest: &'a str,
}

fn header_chain(h: &TrajectoryHeader) -> String {
    sha256_hex(canonical_json(h).as_bytes())
}

fn next_chain(prev: &str, r: &StepRecord) -> String {
    let fields = ChainedFields { t: r.t, action: &r.action, reward: r.reward, done: r.done, digest: &r.digest };
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(b"\n");
    h.update(canonical_json(&fields).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported trajectory version {found} (expected {TRAJECTORY_VERSION})")]
    VersionMismatch { found: u64 },
    #[error("cannot rebuild the episode: {0}")]
    Env(#[from] EnvError),
}

/// One step of an episode as it will be written.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEntry {
    pub action: Action,
    pub reward: f64,
    pub done: bool,
    pub digest: String,
    pub obs: Option<Observation>,
}

impl StepEntry {
    pub fn new(action: Action, result: &StepResult, digest: String, include_obs: bool) -> Self {
        Self {
            action,
            reward: result.reward,
            done: result.done,
            digest,
            obs: include_obs.then(|| result.obs.clone()),
        }
    }
}

/// Streams a trajectory to disk. The header is written on creation, so an
/// unwritable path fails before any stepping.
pub struct TrajectoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
    chain: String,
    next_t: u64,
}

impl TrajectoryWriter {
    pub fn create(path: impl AsRef<Path>, header: &TrajectoryHeader) -> Result<Self, RecordError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| RecordError::Io { path: path.clone(), source };
        let file = File::create(&path).map_err(io)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", canonical_json(header)).map_err(io)?;
        Ok(Self { chain: header_chain(header), path, out, next_t: 0 })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn steps_written(&self) -> u64 {
        self.next_t
    }

    pub fn append(&mut self, e: StepEntry) -> Result<(), RecordError> {
        let mut rec = StepRecord {
            t: self.next_t,
            action: e.action,
            reward: e.reward,
            done: e.done,
            digest: e.digest,
            obs: e.obs,
            chain: None,
        };
        let chain = next_chain(&self.chain, &rec);
        rec.chain = Some(chain.clone());
        writeln!(self.out, "{}", canonical_json(&rec)).map_err(|source| RecordError::Io { path: self.path.clone(), source })?;
        self.chain = chain;
        self.next_t += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), RecordError> {
        self.out.flush().map_err(|source| RecordError::Io { path: self.path.clone(), source })
    }

    pub fn finish(mut self) -> Result<PathBuf, RecordError> {
        self.flush()?;
        Ok(self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub success: bool,
    pub steps: u64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub connections: usize,
}

/// Resets `env` with `seed` and runs `policy` until the episode ends,
/// writing every step to `path`.
pub fn record_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: u64,
    path: impl AsRef<Path>,
    include_obs: bool,
) -> Result<EpisodeSummary, RecordError> {
    let mut writer = TrajectoryWriter::create(path, &TrajectoryHeader::new(env.config().clone(), seed))?;
    let mut obs = env.reset(seed)?;
    policy.reset(env);
    let mut ret = 0.0;
    while !env.is_done() {
        let action = policy.act(&obs);
        let r = env.step(&action)?;
        ret += r.reward;
        let digest = state_digest(env.state().expect("episode running"));
        writer.append(StepEntry::new(action, &r, digest, include_obs))?;
        obs = r.obs;
    }
    writer.finish()?;
    Ok(EpisodeSummary {
        seed,
        success: env.is_success(),
        steps: env.step_count(),
        episode_return: ret,
        connections: obs.connected_count,
    })
}

/// Resets `env` with `seed` and runs `policy` until the episode ends.
pub fn run_episode(env: &mut Env, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeSummary, EnvError> {
    let mut obs = env.reset(seed)?;
    policy.reset(env);
    let mut ret = 0.0;
    while !env.is_done() {
        let r = env.step(&policy.act(&obs))?;
        ret += r.reward;
        obs = r.obs;
    }
    Ok(EpisodeSummary {
        seed,
        success: env.is_success(),
        steps: env.step_count(),
        episode_return: ret,
        connections: obs.connected_count,
    })
}

/// Header and step records of a trajectory file.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(TrajectoryHeader, Vec<StepRecord>), RecordError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| RecordError::Io { path: path.to_path_buf(), source })?;
    parse_trajectory(BufReader::new(file))
}

pub fn parse_trajectory(reader: impl BufRead) -> Result<(TrajectoryHeader, Vec<StepRecord>), RecordError> {
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, message: String| RecordError::Parse { line: line + 1, message };
    let (_, first) = lines.next().ok_or_else(|| parse_err(0, "empty trajectory file".into()))?;
    let first = first.map_err(|e| parse_err(0, e.to_string()))?;
    let head: Value = serde_json::from_str(&first).map_err(|e| parse_err(0, e.to_string()))?;
    match head.get("version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(TRAJECTORY_VERSION) => {}
        Some(v) => return Err(RecordError::VersionMismatch { found: v }),
        None => return Err(parse_err(0, "header has no integer `version`".into())),
    }
    let header: TrajectoryHeader = serde_json::from_value(head).map_err(|e| parse_err(0, e.to_string()))?;
    let mut steps = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| parse_err(i, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| parse_err(i, e.to_string()))?;
        steps.push(rec);
    }
    Ok((header, steps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub ok: bool,
    /// First step whose record disagrees with the replay.
    pub divergence: Option<u64>,
    /// What disagreed at `divergence`.
    pub reason: Option<String>,
    pub steps: u64,
    pub warnings: Vec<String>,
}

/// Rebuilds the episode from the header and re-executes every action,
/// comparing chain, digest, reward and done flag at each step.
pub fn replay_records(header: &TrajectoryHeader, steps: &[StepRecord]) -> Result<ReplayReport, RecordError> {
    let mut warnings = Vec::new();
    if header.engine != ENGINE_VERSION {
        warnings.push(format!("recorded with engine {}, replaying with {ENGINE_VERSION}", header.engine));
    }
    if header.model != header.config.model {
        warnings.push(format!("header model `{}` differs from config model `{}`", header.model, header.config.model));
    }
    let mut env = Env::make(header.config.clone())?;
    env.reset(header.seed)?;
    let mut chain = header_chain(header);
    let diverged = |t: u64, reason: String, warnings: Vec<String>| ReplayReport {
        ok: false,
        divergence: Some(t),
        reason: Some(reason),
        steps: steps.len() as u64,
        warnings,
    };
    for (i, rec) in steps.iter().enumerate() {
        let t = i as u64;
        if rec.t != t {
            return Ok(diverged(t, format!("record index {} out of sequence", rec.t), warnings));
        }
        if let Some(recorded) = &rec.chain {
            let expect = next_chain(&chain, rec);
            if *recorded != expect {
                return Ok(diverged(t, "chain hash mismatch (record was altered)".into(), warnings));
            }
            chain = expect;
        }
        let r = match env.step(&rec.action) {
            Ok(r) => r,
            Err(e) => return Ok(diverged(t, format!("step failed: {e}"), warnings)),
        };
        let digest = state_digest(env.state().expect("episode running"));
        if digest != rec.digest {
            return Ok(diverged(t, "state digest mismatch".into(), warnings));
        }
        if r.reward.to_bits() != rec.reward.to_bits() {
            return Ok(diverged(t, format!("reward {} != recorded {}", r.reward, rec.reward), warnings));
        }
        if r.done != rec.done {
            return Ok(diverged(t, format!("done {} != recorded {}", r.done, rec.done), warnings));
        }
    }
    Ok(ReplayReport { ok: true, divergence: None, reason: None, steps: steps.len() as u64, warnings })
}

pub fn replay_check(path: impl AsRef<Path>) -> Result<ReplayReport, RecordError> {
    let (header, steps) = read_trajectory(path)?;
    replay_records(&header, &steps)
}
