//! `flatpack` — validate models, run headless episodes, check recordings and
//! serve environments over WebSocket.
//!
//! Exit codes: 0 success, 1 domain failure (invalid model, diverged replay,
//! bind failure), 2 usage error (bad flags, missing input file).

use std::io::ErrorKind;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use flatpack::agents::ActionMode;
use flatpack::env::{Env, EnvError, EpisodeConfig};
use flatpack::model::{list_bundled_models, parse_model, validate_model, CatalogError, Diagnostic, Diagnostics};
use flatpack::oracle::{Oracle, Policy, RandomPolicy};
use flatpack::record::{record_episode, replay_check, run_episode, EpisodeSummary, RecordError, TRAJECTORY_EXTENSION};
use flatpack_server::{ServerOptions, DEFAULT_PORT};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "flatpack", version, about = "Furniture assembly environment tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and check a model document.
    Validate {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run headless episodes with seeds S..S+N-1.
    Run {
        /// Bundled name, name on FLATPACK_MODEL_PATH, or a .furn.json path.
        #[arg(long)]
        model: String,
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one trajectory file per episode into this directory.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_steps: Option<u64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
        mode: ModeArg,
        #[arg(long)]
        json: bool,
    },
    /// Re-execute a trajectory file and compare it step by step.
    Replay {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve environments over WebSocket until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Directory of static files (the teleoperation client) served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Seconds without a message before a session is closed.
        #[arg(long, default_value_t = 600)]
        idle_timeout: u64,
        /// Confine `record_start` paths to this directory.
        #[arg(long)]
        record_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// List bundled models.
    Models {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    Random,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Continuous,
    Discrete,
}

impl From<ModeArg> for ActionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => ActionMode::Continuous,
            ModeArg::Discrete => ActionMode::Discrete,
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    /// Bad invocation or missing input.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Failure(_) => ExitCode::from(1),
        }
    }
}

type CliResult = Result<ExitCode, CliError>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,flatpack_server=info".into()),
        )
        .init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Validate { path, json } => validate(&path, json),
        Command::Run { model, policy, episodes, seed, record, max_steps, mode, json } => {
            run(RunArgs { model, policy, episodes, seed, record, max_steps, mode: mode.into(), json })
        }
        Command::Replay { path, json } => replay(&path, json),
        Command::Serve { host, port, ui, idle_timeout, record_dir, json } => {
            serve(&host, port, ui, Duration::from_secs(idle_timeout), record_dir, json)
        }
        Command::Models { json } => models(json),
    };
    res.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::Usage(format!("{}: no such file", path.display())),
        _ => CliError::Usage(format!("{}: {e}", path.display())),
    })
}

fn validate(path: &Path, json: bool) -> CliResult {
    let bytes = read_input(path)?;
    let diags = match parse_model(&bytes) {
        Ok(m) => validate_model(&m),
        Err(e) => Diagnostics {
            errors: vec![Diagnostic { code: e.code().into(), path: e.location().to_string(), message: e.to_string() }],
            warnings: Vec::new(),
        },
    };
    if json {
        print_json(&json!({
            "path": path,
            "valid": diags.is_valid(),
            "errors": diags.errors,
            "warnings": diags.warnings,
        }));
    } else {
        for d in &diags.errors {
            println!("error[{}] {}: {}", d.code, d.path, d.message);
        }
        for d in &diags.warnings {
            println!("warning[{}] {}: {}", d.code, d.path, d.message);
        }
        let verdict = if diags.is_valid() { "valid" } else { "invalid" };
        println!("{}: {verdict} ({} errors, {} warnings)", path.display(), diags.errors.len(), diags.warnings.len());
    }
    Ok(if diags.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

struct RunArgs {
    model: String,
    policy: PolicyKind,
    episodes: u64,
    seed: u64,
    record: Option<PathBuf>,
    max_steps: Option<u64>,
    mode: ActionMode,
    json: bool,
}

#[derive(Serialize)]
struct RunReport<'a> {
    model: &'a str,
    policy: PolicyKind,
    episodes: &'a [EpisodeSummary],
    success_rate: f64,
    mean_return: f64,
    recordings: Vec<PathBuf>,
}

fn env_error(e: EnvError) -> CliError {
    match e {
        EnvError::Model(CatalogError::UnknownModel(_)) | EnvError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        EnvError::Model(CatalogError::Io { ref source, .. }) if source.kind() == ErrorKind::NotFound => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Failure(other.to_string()),
    }
}

fn run(args: RunArgs) -> CliResult {
    let mut cfg = EpisodeConfig::new(args.model.as_str());
    cfg.mode = args.mode;
    if let Some(n) = args.max_steps {
        cfg.max_steps = n;
    }
    let mut env = Env::make(cfg).map_err(env_error)?;
    if let Some(dir) = &args.record {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("{}: {e}", dir.display())))?;
    }
    let mut results = Vec::with_capacity(args.episodes as usize);
    let mut recordings = Vec::new();
    let policy_name = match args.policy {
        PolicyKind::Random => "random",
        PolicyKind::Oracle => "oracle",
    };
    for seed in (args.seed..).take(args.episodes as usize) {
        let mut policy: Box<dyn Policy> = match args.policy {
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::Oracle => Box::new(Oracle::default()),
        };
        let summary = match &args.record {
            Some(dir) => {
                let name = format!("{}_{policy_name}_seed{seed}{TRAJECTORY_EXTENSION}", env.model().name);
                let path = dir.join(name);
                let s = record_episode(&mut env, policy.as_mut(), seed, &path, false).map_err(|e| CliError::Failure(e.to_string()))?;
                recordings.push(path);
                s
            }
            None => run_episode(&mut env, policy.as_mut(), seed).map_err(|e| CliError::Failure(e.to_string()))?,
        };
        tracing::debug!(seed, success = summary.success, steps = summary.steps, "episode finished");
        if !args.json {
            println!(
                "seed {:>6}  success {:<5}  steps {:>5}  return {}",
                summary.seed, summary.success, summary.steps, summary.episode_return
            );
        }
        results.push(summary);
    }
    let n = results.len() as f64;
    let success_rate = results.iter().filter(|s| s.success).count() as f64 / n;
    let mean_return = results.iter().map(|s| s.episode_return).sum::<f64>() / n;
    if args.json {
        print_json(&RunReport {
            model: &env.model().name,
            policy: args.policy,
            episodes: &results,
            success_rate,
            mean_return,
            recordings,
        });
    } else {
        println!("success rate {success_rate} over {} episodes (mean return {mean_return})", results.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(path: &Path, json: bool) -> CliResult {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    let report = match replay_check(path) {
        Ok(r) => r,
        Err(e @ (RecordError::Parse { .. } | RecordError::VersionMismatch { .. } | RecordError::Env(_))) => {
            if json {
                print_json(&json!({ "path": path, "ok": false, "error": e.to_string() }));
            } else {
                println!("{}: {e}", path.display());
            }
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(CliError::Failure(e.to_string())),
    };
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    if json {
        print_json(&json!({
            "path": path,
            "ok": report.ok,
            "steps": report.steps,
            "divergence": report.divergence,
            "reason": report.reason,
            "warnings": report.warnings,
        }));
    } else if report.ok {
        println!("{}: ok, {} steps reproduced", path.display(), report.steps);
    } else {
        println!(
            "{}: diverged at step {}: {}",
            path.display(),
            report.divergence.map_or("?".into(), |t| t.to_string()),
            report.reason.as_deref().unwrap_or("mismatch")
        );
    }
    Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn serve(host: &str, port: u16, ui: Option<PathBuf>, idle: Duration, record_dir: Option<PathBuf>, json: bool) -> CliResult {
    if let Some(dir) = &ui {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("{}: not a directory", dir.display())));
        }
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Failure(e.to_string()))?;
    rt.block_on(async move {
        let opts = ServerOptions { ui_dir: ui, idle_timeout: idle, record_dir, ..Default::default() };
        let handle = flatpack_server::start((host, port), opts)
            .await
            .map_err(|e| CliError::Failure(format!("cannot bind {host}:{port}: {e}")))?;
        let addr: SocketAddr = handle.local_addr();
        if json {
            println!("{}", json!({ "listening": addr.to_string(), "ws": format!("ws://{addr}/ws") }));
        } else {
            println!("listening on {addr} (ws://{addr}/ws)");
        }
        let stop = handle.stopper();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                tracing::info!("interrupted, shutting down");
                let _ = stop.send(true);
            }
        });
        handle.wait().await.map_err(|e| CliError::Failure(e.to_string()))?;
        Ok(ExitCode::SUCCESS)
    })
}

fn models(json: bool) -> CliResult {
    let list = list_bundled_models();
    if json {
        print_json(&json!({ "models": list }));
    } else {
        for m in &list {
            println!("{:<16} {} parts, {} connectors", m.name, m.parts, m.connectors);
        }
    }
    Ok(ExitCode::SUCCESS)
}
