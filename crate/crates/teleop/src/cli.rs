//! Command-line interface of the `gaitd` binary.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use clap::Parser;
use gait_core::{GaitLibrary, RuntimeConfig};

use crate::export::ExportSpec;

#[derive(Clone, Debug, Parser)]
#[command(name = "gaitd", version, about = "Quadruped gait runtime with websocket tele-operation")]
pub struct Cli {
    /// TCP port for the websocket service.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,

    /// Address to bind.
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,

    /// Command (telemetry) rate in Hz; overrides the config file.
    #[arg(long)]
    pub rate_hz: Option<f64>,

    /// Internal integration step in seconds; overrides the config file.
    #[arg(long)]
    pub dt: Option<f64>,

    /// Runtime config (TOML): gains, geometry, limits, calibration.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Gait library (TOML). Defaults to the built-in library.
    #[arg(long)]
    pub gaits: Option<PathBuf>,

    /// Write a JSON-lines session record here.
    #[arg(long)]
    pub record: Option<PathBuf>,

    /// Re-run a session record and verify it reproduces byte for byte.
    #[arg(long, conflicts_with_all = ["headless", "script"])]
    pub replay: Option<PathBuf>,

    /// Run without networking: execute a script and write the record.
    #[arg(long)]
    pub headless: bool,

    /// Simulated seconds for a headless run.
    #[arg(long, requires = "headless")]
    pub duration: Option<f64>,

    /// Command script for a headless run (JSON lines of {"tick":N,"command":{...}}).
    #[arg(long, requires = "headless")]
    pub script: Option<PathBuf>,

    /// Export a gait's trajectory as CSV; may be repeated.
    #[arg(long, value_name = "GAIT:CYCLES:PATH")]
    pub export: Vec<ExportSpec>,

    /// Samples per cycle for --export.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub export_resolution: u32,

    /// Send every Nth telemetry frame (clients may override with ?decimate=N).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub decimate: u32,

    /// Serve static files (e.g. the browser cockpit) from this directory.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub const DEFAULT_HEADLESS_SECONDS: f64 = 60.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    Export,
    Replay(PathBuf),
    Headless { frames: u64 },
    Serve,
}

impl Cli {
    pub fn mode(&self, config: &RuntimeConfig) -> Result<Mode, String> {
        if !self.export.is_empty() {
            return Ok(Mode::Export);
        }
        if let Some(path) = &self.replay {
            return Ok(Mode::Replay(path.clone()));
        }
        if self.headless {
            let seconds = self.duration.unwrap_or(DEFAULT_HEADLESS_SECONDS);
            if !(seconds.is_finite() && seconds >= 0.0) {
                return Err(format!("--duration must be >= 0, got {seconds}"));
            }
            let frames = (seconds * config.command_rate_hz).round() as u64;
            return Ok(Mode::Headless { frames });
        }
        Ok(Mode::Serve)
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    /// Loads and validates the runtime configuration with CLI overrides.
    pub fn runtime_config(&self) -> Result<RuntimeConfig, String> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                RuntimeConfig::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => RuntimeConfig::default(),
        };
        if let Some(path) = &self.gaits {
            config.gaits = GaitLibrary::load(path).map_err(|e| e.to_string())?;
        }
        if let Some(hz) = self.rate_hz {
            config.command_rate_hz = hz;
        }
        if let Some(dt) = self.dt {
            config.internal_dt = dt;
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}
