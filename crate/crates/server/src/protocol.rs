//! JSON message protocol and the session table behind it.
//!
//! Requests are `{"type": ..., "id": <int>, "payload": {...}}`; every request
//! gets exactly one reply `{"type": "result" | "error", "id": <same id>,
//! "payload": ...}`. Error payloads are `{"code": ..., "message": ...}`.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use flatpack::agents::Action;
use flatpack::env::{Env, EnvError, EpisodeConfig};
use flatpack::model::list_bundled_models;
use flatpack::record::{state_digest, RecordError, StepEntry, TrajectoryHeader, TrajectoryWriter};
use flatpack::ENGINE_VERSION;
use serde::Deserialize;
use serde_json::{json, Value};

pub const PROTOCOL_VERSION: u32 = 1;

/// Identifies one client connection; sessions it creates close with it.
pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct ProtoError {
    pub code: &'static str,
    pub message: String,
}

impl ProtoError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<EnvError> for ProtoError {
    fn from(e: EnvError) -> Self {
        ProtoError::new(e.code(), e.to_string())
    }
}

impl From<RecordError> for ProtoError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io { .. } => ProtoError::new("io_error", e.to_string()),
            RecordError::Env(env) => env.into(),
            other => ProtoError::new("io_error", other.to_string()),
        }
    }
}

struct Recording {
    writer: TrajectoryWriter,
    include_obs: bool,
}

struct Session {
    owner: ConnId,
    env: Env,
    /// Steps since the last reset, so a recording can start mid-episode.
    history: Vec<StepEntry>,
    recording: Option<Recording>,
    last_active: Instant,
}

impl Session {
    fn stop_recording(&mut self) -> Result<Option<(PathBuf, u64)>, ProtoError> {
        match self.recording.take() {
            Some(rec) => {
                let steps = rec.writer.steps_written();
                let path = rec.writer.finish()?;
                Ok(Some((path, steps)))
            }
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TableOptions {
    /// When set, recording paths must be relative and are resolved inside
    /// this directory.
    pub record_dir: Option<PathBuf>,
}

#[derive(Default)]
pub struct SessionTable {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    opts: TableOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRef {
    session: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetPayload {
    session: String,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepPayload {
    session: String,
    action: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordPayload {
    session: String,
    path: String,
    #[serde(default)]
    include_obs: bool,
}

fn payload<T: for<'de> Deserialize<'de>>(p: &Value, code: &'static str) -> Result<T, ProtoError> {
    T::deserialize(p).map_err(|e| ProtoError::new(code, format!("bad payload: {e}")))
}

impl SessionTable {
    pub fn new(opts: TableOptions) -> Self {
        Self { opts, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ProtoError> {
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ProtoError::new("unknown_session", format!("no session `{id}`")))
    }

    fn with_session<R>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<R, ProtoError>) -> Result<R, ProtoError> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session");
        s.last_active = Instant::now();
        f(&mut s)
    }

    /// Handles one text frame and returns the reply frame.
    pub fn handle_text(&self, conn: ConnId, text: &str) -> String {
        let reply = match serde_json::from_str::<Value>(text) {
            Err(e) => error_reply(Value::Null, ProtoError::new("bad_json", e.to_string())),
            Ok(msg) => self.handle_message(conn, &msg),
        };
        reply.to_string()
    }

    pub fn handle_message(&self, conn: ConnId, msg: &Value) -> Value {
        let Some(obj) = msg.as_object() else {
            return error_reply(Value::Null, ProtoError::new("bad_json", "message must be a JSON object"));
        };
        let id = match obj.get("id") {
            None | Some(Value::Null) => Value::Null,
            Some(v) if v.is_i64() || v.is_u64() => v.clone(),
            Some(_) => return error_reply(Value::Null, ProtoError::new("bad_json", "`id` must be an integer")),
        };
        let Some(kind) = obj.get("type").and_then(Value::as_str) else {
            return error_reply(id, ProtoError::new("bad_json", "missing string field `type`"));
        };
        let empty = json!({});
        let p = obj.get("payload").unwrap_or(&empty);
        let result = match kind {
            "hello" => Ok(json!({ "protocol": PROTOCOL_VERSION, "engine": ENGINE_VERSION })),
            "list_models" => Ok(json!({ "models": list_bundled_models() })),
            "make" => self.make(conn, p),
            "reset" => self.reset(p),
            "step" => self.step(p),
            "observe" => self.observe(p),
            "record_start" => self.record_start(p),
            "record_stop" => self.record_stop(p),
            "close" => self.close(p),
            other => Err(ProtoError::new("unknown_type", format!("unknown message type `{other}`"))),
        };
        match result {
            Ok(v) => json!({ "type": "result", "id": id, "payload": v }),
            Err(e) => error_reply(id, e),
        }
    }

    fn make(&self, conn: ConnId, p: &Value) -> Result<Value, ProtoError> {
        let cfg: EpisodeConfig = payload(p, "invalid_config")?;
        let env = Env::make(cfg)?;
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("s{n}-{:08x}", process_salt());
        let config = serde_json::to_value(env.config()).expect("config serializes");
        let session =
            Session { owner: conn, env, history: Vec::new(), recording: None, last_active: Instant::now() };
        self.sessions.lock().expect("session table").insert(id.clone(), Arc::new(Mutex::new(session)));
        tracing::info!(session = %id, conn, "session created");
        Ok(json!({ "session_id": id, "config": config }))
    }

    fn reset(&self, p: &Value) -> Result<Value, ProtoError> {
        let r: ResetPayload = payload(p, "bad_json")?;
        self.with_session(&r.session, |s| {
            // A recording covers one episode.
            s.stop_recording()?;
            let obs = s.env.reset(r.seed)?;
            s.history.clear();
            let digest = state_digest(s.env.state().expect("just reset"));
            Ok(json!({ "obs": obs, "digest": digest }))
        })
    }

    fn step(&self, p: &Value) -> Result<Value, ProtoError> {
        let r: StepPayload = payload(p, "bad_json")?;
        let action: Action = serde_json::from_value(r.action)
            .map_err(|_| ProtoError::new("bad_action", "action must be an integer or an array of numbers"))?;
        self.with_session(&r.session, |s| {
            let res = s.env.step(&action)?;
            let digest = state_digest(s.env.state().expect("stepped"));
            let entry = StepEntry::new(action, &res, digest.clone(), false);
            if let Some(rec) = s.recording.as_mut() {
                let mut e = entry.clone();
                if rec.include_obs {
                    e.obs = Some(res.obs.clone());
                }
                rec.writer.append(e)?;
                if res.done {
                    rec.writer.flush()?;
                }
            }
            s.history.push(entry);
            Ok(json!({ "obs": res.obs, "reward": res.reward, "done": res.done, "info": res.info, "digest": digest }))
        })
    }

    fn observe(&self, p: &Value) -> Result<Value, ProtoError> {
        let r: SessionRef = payload(p, "bad_json")?;
        self.with_session(&r.session, |s| {
            let obs = s.env.observe()?;
            let digest = state_digest(s.env.state().expect("observed"));
            Ok(json!({ "obs": obs, "digest": digest, "done": s.env.is_done() }))
        })
    }

    fn resolve_record_path(&self, raw: &str) -> Result<PathBuf, ProtoError> {
        let path = Path::new(raw);
        match &self.opts.record_dir {
            None => Ok(path.to_path_buf()),
            Some(dir) => {
                if path.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
                    return Err(ProtoError::new("io_error", "recording path must stay inside the recording directory"));
                }
                Ok(dir.join(path))
            }
        }
    }

    fn record_start(&self, p: &Value) -> Result<Value, ProtoError> {
        let r: RecordPayload = payload(p, "bad_json")?;
        let path = self.resolve_record_path(&r.path)?;
        self.with_session(&r.session, |s| {
            let seed = s.env.seed().ok_or_else(|| ProtoError::from(EnvError::NotReset))?;
            s.stop_recording()?;
            let mut writer = TrajectoryWriter::create(&path, &TrajectoryHeader::new(s.env.config().clone(), seed))?;
            for e in &s.history {
                writer.append(e.clone())?;
            }
            writer.flush()?;
            let steps = writer.steps_written();
            s.recording = Some(Recording { writer, include_obs: r.include_obs });
            Ok(json!({ "path": path.display().to_string(), "steps_written": steps }))
        })
    }

    fn record_stop(&self, p: &Value) -> Result<Value, ProtoError> {
        let r: SessionRef = payload(p, "bad_json")?;
        self.with_session(&r.session, |s| match s.stop_recording()? {
            Some((path, steps)) => Ok(json!({ "path": path.display().to_string(), "steps_written": steps })),
            None => Ok(json!({ "path": null, "steps_written": 0 })),
        })
    }

    fn close(&self, p: &Value) -> Result<Value, ProtoError> {
        let r: SessionRef = payload(p, "bad_json")?;
        let s = self
            .sessions
            .lock()
            .expect("session table")
            .remove(&r.session)
            .ok_or_else(|| ProtoError::new("unknown_session", format!("no session `{}`", r.session)))?;
        let stopped = s.lock().expect("session").stop_recording()?;
        tracing::info!(session = %r.session, "session closed");
        Ok(json!({ "closed": true, "recording": stopped.map(|(p, _)| p.display().to_string()) }))
    }

    fn remove_where(&self, pred: impl Fn(&Session) -> bool) -> usize {
        let removed: Vec<(String, Arc<Mutex<Session>>)> = {
            let mut table = self.sessions.lock().expect("session table");
            let ids: Vec<String> = table
                .iter()
                .filter(|(_, s)| pred(&s.lock().expect("session")))
                .map(|(id, _)| id.clone())
                .collect();
            ids.into_iter().filter_map(|id| table.remove(&id).map(|s| (id, s))).collect()
        };
        for (id, s) in &removed {
            if let Err(e) = s.lock().expect("session").stop_recording() {
                tracing::warn!(session = %id, error = %e.message, "failed to finish recording");
            }
            tracing::info!(session = %id, "session closed");
        }
        removed.len()
    }

    /// Closes every session created by `conn`.
    pub fn close_connection(&self, conn: ConnId) -> usize {
        self.remove_where(|s| s.owner == conn)
    }

    /// Closes sessions idle for longer than `max_idle`.
    pub fn evict_idle(&self, max_idle: Duration) -> usize {
        let now = Instant::now();
        self.remove_where(|s| now.duration_since(s.last_active) > max_idle)
    }

    pub fn close_all(&self) -> usize {
        self.remove_where(|_| true)
    }
}

fn error_reply(id: Value, e: ProtoError) -> Value {
    json!({ "type": "error", "id": id, "payload": { "code": e.code, "message": e.message } })
}

/// Distinguishes session ids across server restarts.
fn process_salt() -> u32 {
    use std::sync::OnceLock;
    static SALT: OnceLock<u32> = OnceLock::new();
    *SALT.get_or_init(|| {
        let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
        (t.as_nanos() as u32) ^ std::process::id().rotate_left(16)
    })
}
