//! `door`: run the controller, run the recognition service, enroll from a
//! file, or replay a scenario script.
//!
//! Exit codes: 0 success, 2 config or usage error, 3 enrollment denied by
//! the pipeline, 4 scenario I/O, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use clap::{Parser, Subcommand, ValueEnum};

use smartdoor_core::controller::{self, admin, runtime, Controller, ControllerError};
use smartdoor_core::http::ServerHandle;
use smartdoor_core::hwsim::{CameraSource, Hardware};
use smartdoor_core::protocol::client::FaceClient;
use smartdoor_core::protocol::server;
use smartdoor_core::protocol::service::{FaceService, ServiceSettings};
use smartdoor_core::sim::{Scenario, ScenarioError, Simulation};
use smartdoor_core::vision::{decode_pgm, detect_and_crop, encode_pgm, VisionError};
use smartdoor_core::{EventLog, Role, SharedClock, SystemClock, SystemConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DENIED: u8 = 3;
const EXIT_SCENARIO: u8 = 4;

const TICK: Duration = Duration::from_millis(10);

#[derive(Parser)]
#[command(name = "door", version, about = "Face-recognition door")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the door controller and its admin API on the wall clock.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the recognition protocol over the configured store directory.
    Faceapi {
        #[arg(long)]
        config: PathBuf,
    },
    /// Enroll one person from a PGM image.
    Enroll {
        #[arg(long)]
        name: String,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        image: PathBuf,
        /// Guest expiry, e.g. 2026-11-01T18:00:00Z; required for guests.
        #[arg(long, value_parser = parse_expiry, required_if_eq("role", "guest"))]
        expires: Option<u64>,
        #[arg(long, env = "DOOR_CONFIG", default_value = "door.json")]
        config: PathBuf,
    },
    /// Replay a scenario script on a manual clock and print the event log.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Resident,
    Guest,
    Blacklisted,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Resident => Role::Resident,
            RoleArg::Guest => Role::Guest,
            RoleArg::Blacklisted => Role::Blacklisted,
        }
    }
}

/// RFC 3339 timestamp, or a date / date-time without offset taken as UTC,
/// as milliseconds since the Unix epoch.
fn parse_expiry(s: &str) -> Result<u64, String> {
    let ms = if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        t.timestamp_millis()
    } else if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        t.and_utc().timestamp_millis()
    } else if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        d.and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp_millis()
    } else {
        return Err(format!("not an ISO 8601 timestamp: {s:?}"));
    };
    u64::try_from(ms).map_err(|_| format!("timestamp before 1970: {s:?}"))
}

/// A failure with its exit code.
struct Fail(u8, String);

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Fail(EXIT_USAGE, msg.into())
    }

    fn other(msg: impl Into<String>) -> Self {
        Fail(EXIT_FAILURE, msg.into())
    }
}

fn load_config(path: &Path) -> Result<SystemConfig, Fail> {
    SystemConfig::load(path).map_err(|e| Fail::usage(e.to_string()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("DOOR_LOG")
                .unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config } => run(&config),
        Cmd::Faceapi { config } => faceapi(&config),
        Cmd::Enroll {
            name,
            role,
            image,
            expires,
            config,
        } => enroll(&config, &name, role.into(), &image, expires),
        Cmd::Replay { scenario, config } => replay(&scenario, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("door: {msg}");
            ExitCode::from(code)
        }
    }
}

/// Blocks until ctrl-c or SIGTERM.
fn wait_for_shutdown() -> Result<(), Fail> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Fail::other(format!("signal runtime: {e}")))?;
    rt.block_on(async {
        #[cfg(unix)]
        {
            use tokio::signal::unix::{signal, SignalKind};
            let mut term = signal(SignalKind::terminate())
                .map_err(|e| Fail::other(format!("SIGTERM handler: {e}")))?;
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
        }
        #[cfg(not(unix))]
        {
            let _ = tokio::signal::ctrl_c().await;
        }
        Ok(())
    })
}

fn run(config_path: &Path) -> Result<(), Fail> {
    let config = load_config(config_path)?;
    let clock: SharedClock = Arc::new(SystemClock::new());
    let log = match &config.event_log {
        Some(path) => EventLog::with_file(path)
            .map_err(|e| Fail::other(format!("event log {}: {e}", path.display())))?,
        None => EventLog::new(),
    };
    let faces = FaceClient::new(&config.recognition_endpoint, &config.api_key)
        .map_err(|e| Fail::other(e.to_string()))?;
    let mut hw = Hardware::new(clock, config.solenoid_latency, config.doorbell_debounce);
    if let Some(dir) = &config.frames_dir {
        hw.camera = CameraSource::from_dir(dir).map_err(|e| Fail::usage(e.to_string()))?;
    }
    let admin_listen = config.admin_listen.clone();
    let token = config.admin_token.clone();
    let controller = Controller::with_hardware(config, hw, faces, Arc::new(log));
    let door = runtime::spawn(controller, TICK);
    let api = match ServerHandle::spawn(admin::router(door.handle.clone(), &token), &admin_listen) {
        Ok(api) => api,
        Err(e) => {
            door.shutdown();
            return Err(Fail::other(format!("admin API on {admin_listen}: {e}")));
        }
    };
    println!("admin API listening on {}", api.url());

    let waited = wait_for_shutdown();
    api.stop();
    let snap = door.shutdown();
    match snap {
        Some(s) if !s.relay_energized => println!("relay de-energized, door locked"),
        Some(_) => return Err(Fail::other("relay still energized after shutdown")),
        None => return Err(Fail::other("controller stopped before shutdown")),
    }
    waited
}

fn faceapi(config_path: &Path) -> Result<(), Fail> {
    let config = load_config(config_path)?;
    let settings = ServiceSettings::from(&config);
    let service = FaceService::open(Arc::new(SystemClock::new()), settings)
        .map_err(|e| Fail::usage(format!("store: {e}")))?;
    let api = ServerHandle::spawn(
        server::router(Arc::new(service), &config.api_key),
        &config.faceapi_listen,
    )
    .map_err(|e| Fail::other(format!("listen on {}: {e}", config.faceapi_listen)))?;
    println!("face API listening on {}", api.url());
    let waited = wait_for_shutdown();
    api.stop();
    println!("face API stopped");
    waited
}

fn enroll(
    config_path: &Path,
    name: &str,
    role: Role,
    image: &Path,
    expires: Option<u64>,
) -> Result<(), Fail> {
    if role != Role::Guest && expires.is_some() {
        return Err(Fail::usage("--expires only applies to guests"));
    }
    if name.trim().is_empty() {
        return Err(Fail::usage("--name must not be empty"));
    }
    let config = load_config(config_path)?;
    let bytes = std::fs::read(image)
        .map_err(|e| Fail::usage(format!("cannot read {}: {e}", image.display())))?;
    let frame = decode_pgm(&bytes)
        .map_err(|e| Fail::usage(format!("{}: {}", image.display(), VisionError::from(e))))?;
    let face = match detect_and_crop(&frame, config.detection_area_fraction_min) {
        Ok(face) => face,
        Err(VisionError::NoFaceFound) => return Err(Fail(EXIT_DENIED, "NoFaceFound".into())),
        Err(e) => return Err(Fail(EXIT_DENIED, e.to_string())),
    };
    let faces = FaceClient::new(&config.recognition_endpoint, &config.api_key)
        .map_err(|e| Fail::other(e.to_string()))?;
    let person_id = controller::upload_person(
        &faces,
        &config.person_group_id,
        name,
        role,
        expires,
        &encode_pgm(&face.crop),
    )
    .map_err(|e| match e {
        ControllerError::NoFaceFound => Fail(EXIT_DENIED, "NoFaceFound".into()),
        e => Fail::other(e.to_string()),
    })?;
    println!("{person_id}");
    Ok(())
}

fn replay(script: &Path, config_path: &Path) -> Result<(), Fail> {
    let config = load_config(config_path)?;
    let scenario = Scenario::load(script, config.frames_dir.as_deref())
        .map_err(|e| Fail(EXIT_SCENARIO, e.to_string()))?;
    let mut sim = Simulation::from_config(config).map_err(|e| match e {
        ScenarioError::Store(e) => Fail::usage(format!("store: {e}")),
        e => Fail(EXIT_SCENARIO, e.to_string()),
    })?;
    sim.run(&scenario);
    print!("{}", sim.to_jsonl());
    Ok(())
}
