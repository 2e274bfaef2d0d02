use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use gait_teleop::cli::{Cli, Mode};
use gait_teleop::export::export_to_file;
use gait_teleop::harness::{parse_script, run_headless};
use gait_teleop::service::{self, ServiceOptions};
use gait_teleop::session::{self, SessionRecord, SessionWriter};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("gaitd: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let config = cli.runtime_config()?;
    match cli.mode(&config)? {
        Mode::Export => {
            for spec in &cli.export {
                let rows = export_to_file(&config, spec, cli.export_resolution).map_err(|e| e.to_string())?;
                eprintln!("exported {} ({} rows) to {}", spec.gait, rows, spec.path);
            }
            Ok(ExitCode::SUCCESS)
        }
        Mode::Replay(path) => {
            let record = SessionRecord::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut out = match &cli.record {
                Some(p) => {
                    let file = File::create(p).map_err(|e| format!("{}: {e}", p.display()))?;
                    Some(SessionWriter::new(BufWriter::new(file), &record.header).map_err(|e| e.to_string())?)
                }
                None => None,
            };
            let report = session::replay(&record, config, |line| match &mut out {
                Some(w) => w.frame_line(line),
                None => Ok(()),
            })
            .map_err(|e| e.to_string())?;
            if let Some(mut w) = out {
                w.flush().map_err(|e| e.to_string())?;
            }
            if report.identical() {
                eprintln!(
                    "replay identical: {} frames, {} commands",
                    report.frames, report.commands
                );
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "replay differs from the record at tick {}",
                    report.first_mismatch.unwrap_or_default()
                );
                Ok(ExitCode::FAILURE)
            }
        }
        Mode::Headless { frames } => {
            let script = match &cli.script {
                Some(p) => {
                    let file = File::open(p).map_err(|e| format!("{}: {e}", p.display()))?;
                    parse_script(BufReader::new(file)).map_err(|e| format!("{}: {e}", p.display()))?
                }
                None => Vec::new(),
            };
            let out: Box<dyn Write> = match &cli.record {
                Some(p) => Box::new(BufWriter::new(
                    File::create(p).map_err(|e| format!("{}: {e}", p.display()))?,
                )),
                None => Box::new(BufWriter::new(std::io::stdout().lock())),
            };
            let (applied, _) = run_headless(config, &script, frames, out).map_err(|e| e.to_string())?;
            eprintln!("headless run: {frames} frames, {applied}/{} commands applied", script.len());
            Ok(ExitCode::SUCCESS)
        }
        Mode::Serve => serve(cli, config),
    }
}

fn serve(cli: Cli, config: gait_core::RuntimeConfig) -> Result<ExitCode, String> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let mut running = service::start(ServiceOptions {
            config,
            bind: cli.socket_addr(),
            decimate: cli.decimate,
            record: cli.record.clone(),
            static_dir: cli.static_dir.clone(),
        })
        .await
        .map_err(|e| e.to_string())?;
        eprintln!("listening on ws://{}/ws", running.local_addr());
        tokio::select! {
            _ = service::ctrl_c() => {}
            result = running.wait_runtime() => {
                return match result {
                    Ok(_) => Ok(ExitCode::SUCCESS),
                    Err(e) => Err(e.to_string()),
                };
            }
        }
        let summary = running.shutdown().await.map_err(|e| e.to_string())?;
        eprintln!(
            "stopped after {} frames ({} commands applied, {} rejected)",
            summary.frames, summary.commands_applied, summary.commands_rejected
        );
        Ok(ExitCode::SUCCESS)
    })
}
