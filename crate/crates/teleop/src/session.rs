//! JSON-lines session records.
//!
//! The first line is a header holding hashes of the runtime configuration
//! and gait library. Command lines carry the number of frames emitted before
//! the command was applied; frame lines are the telemetry exactly as sent.
//! Replaying the commands against the same configuration must regenerate
//! every frame line byte for byte.

use std::io::{BufRead, Write};
use std::path::Path;

use gait_core::{Command, GaitRuntime, RuntimeConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::protocol::frame_json;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset} (line {line}): {message}")]
    Parse {
        offset: u64,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Format(String),
    #[error("config hash mismatch: record {recorded}, current {current}")]
    ConfigMismatch { recorded: String, current: String },
    #[error("gait library hash mismatch: record {recorded}, current {current}")]
    GaitsMismatch { recorded: String, current: String },
    #[error("runtime: {0}")]
    Runtime(#[from] gait_core::Error),
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

pub fn config_hash(config: &RuntimeConfig) -> String {
    sha256_json(config)
}

pub fn gaits_hash(config: &RuntimeConfig) -> String {
    sha256_json(&config.gaits.to_file())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub config_hash: String,
    pub gaits_hash: String,
    /// Wall-clock start of a live session; absent for headless runs so that
    /// their records are reproducible.
    pub start_time_unix_ms: Option<u64>,
}

impl Header {
    pub fn new(config: &RuntimeConfig, start_time_unix_ms: Option<u64>) -> Self {
        Self {
            version: RECORD_VERSION,
            config_hash: config_hash(config),
            gaits_hash: gaits_hash(config),
            start_time_unix_ms,
        }
    }
}

/// A command as applied by the runtime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    /// Frames emitted before the command took effect.
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    pub command: Command,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a Header),
    Command(&'a CommandEntry),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineOwned {
    Header(Header),
    Command(CommandEntry),
    Frame(serde::de::IgnoredAny),
}

/// Streams a record to any writer.
pub struct SessionWriter<W: Write> {
    out: W,
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, header: &Header) -> std::io::Result<Self> {
        writeln!(out, "{}", serde_json::to_string(&LineRef::Header(header))?)?;
        Ok(Self { out })
    }

    pub fn command(&mut self, entry: &CommandEntry) -> std::io::Result<()> {
        writeln!(self.out, "{}", serde_json::to_string(&LineRef::Command(entry))?)
    }

    /// Writes an already serialized frame line.
    pub fn frame_line(&mut self, line: &str) -> std::io::Result<()> {
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// A parsed record; frame lines are kept as raw text.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub header: Header,
    pub commands: Vec<CommandEntry>,
    pub frames: Vec<String>,
}

impl SessionRecord {
    pub fn read(input: impl BufRead) -> Result<Self, SessionError> {
        let mut header = None;
        let mut commands = Vec::new();
        let mut frames = Vec::new();
        let mut offset = 0u64;
        for (index, line) in input.split(b'\n').enumerate() {
            let raw = line?;
            let start = offset;
            offset += raw.len() as u64 + 1;
            let line_no = index + 1;
            let parse_err = |message: String, col: usize| SessionError::Parse {
                offset: start + col as u64,
                line: line_no,
                message,
            };
            let text = std::str::from_utf8(&raw)
                .map_err(|e| parse_err(format!("invalid UTF-8: {e}"), e.valid_up_to()))?;
            if text.trim().is_empty() {
                continue;
            }
            let parsed: LineOwned = serde_json::from_str(text)
                .map_err(|e| parse_err(e.to_string(), e.column().saturating_sub(1)))?;
            match (parsed, header.is_some()) {
                (LineOwned::Header(h), false) => {
                    if h.version != RECORD_VERSION {
                        return Err(parse_err(format!("unsupported record version {}", h.version), 0));
                    }
                    header = Some(h);
                }
                (_, false) => return Err(parse_err("first line must be the header".into(), 0)),
                (LineOwned::Header(_), true) => return Err(parse_err("duplicate header".into(), 0)),
                (LineOwned::Command(c), true) => {
                    if c.tick != frames.len() as u64 {
                        return Err(parse_err(
                            format!("command tick {} out of order (after {} frames)", c.tick, frames.len()),
                            0,
                        ));
                    }
                    commands.push(c);
                }
                (LineOwned::Frame(_), true) => frames.push(text.to_string()),
            }
        }
        let header = header.ok_or_else(|| SessionError::Format("empty record".into()))?;
        Ok(Self { header, commands, frames })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn check_config(&self, config: &RuntimeConfig) -> Result<(), SessionError> {
        let current = config_hash(config);
        if current != self.header.config_hash {
            return Err(SessionError::ConfigMismatch {
                recorded: self.header.config_hash.clone(),
                current,
            });
        }
        let current = gaits_hash(config);
        if current != self.header.gaits_hash {
            return Err(SessionError::GaitsMismatch {
                recorded: self.header.gaits_hash.clone(),
                current,
            });
        }
        Ok(())
    }
}

/// Drives a runtime through a command log, handing every frame line to
/// `sink` and every applied command to `on_command`.
///
/// Commands whose tick is `k` are applied after `k` frames. Commands the
/// runtime rejects are skipped, as they would have been live.
pub fn run_commands(
    config: RuntimeConfig,
    commands: &[CommandEntry],
    frames: u64,
    mut on_command: impl FnMut(&CommandEntry) -> std::io::Result<()>,
    mut sink: impl FnMut(&str) -> std::io::Result<()>,
) -> Result<(), SessionError> {
    let mut rt = GaitRuntime::new(config)?;
    let mut pending = commands.iter().peekable();
    for k in 0..frames {
        while let Some(entry) = pending.next_if(|c| c.tick <= k) {
            if rt.apply(&entry.command).is_ok() {
                on_command(entry)?;
            }
        }
        sink(&frame_json(&rt.tick()?))?;
    }
    for entry in pending {
        if rt.apply(&entry.command).is_ok() {
            on_command(entry)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub frames: usize,
    pub commands: usize,
    /// 1-based tick of the first frame that differs, if any.
    pub first_mismatch: Option<u64>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Re-runs a record's command log and compares the regenerated frame lines
/// with the recorded ones. Refuses records made with a different config.
pub fn replay(
    record: &SessionRecord,
    config: RuntimeConfig,
    mut sink: impl FnMut(&str) -> std::io::Result<()>,
) -> Result<ReplayReport, SessionError> {
    record.check_config(&config)?;
    let mut index = 0usize;
    let mut first_mismatch = None;
    run_commands(
        config,
        &record.commands,
        record.frames.len() as u64,
        |_| Ok(()),
        |line| {
            if first_mismatch.is_none() && record.frames[index] != line {
                first_mismatch = Some(index as u64 + 1);
            }
            index += 1;
            sink(line)
        },
    )?;
    Ok(ReplayReport {
        frames: record.frames.len(),
        commands: record.commands.len(),
        first_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(commands: &[CommandEntry], frames: u64) -> Vec<u8> {
        let config = RuntimeConfig::default();
        let mut w = SessionWriter::new(Vec::new(), &Header::new(&config, None)).unwrap();
        let out = std::cell::RefCell::new(&mut w);
        run_commands(
            config,
            commands,
            frames,
            |c| out.borrow_mut().command(c),
            |l| out.borrow_mut().frame_line(l),
        )
        .unwrap();
        w.into_inner()
    }

    fn entry(tick: u64, command: Command) -> CommandEntry {
        CommandEntry { tick, seq: None, client: None, command }
    }

    #[test]
    fn empty_log_replays() {
        let bytes = record(&[], 100);
        let rec = SessionRecord::read(&bytes[..]).unwrap();
        assert_eq!(rec.frames.len(), 100);
        let report = replay(&rec, RuntimeConfig::default(), |_| Ok(())).unwrap();
        assert!(report.identical());
    }

    #[test]
    fn header_comes_first_and_commands_are_inline() {
        let bytes = record(&[entry(3, Command::Stop)], 5);
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with(r#"{"kind":"header","version":1,"#));
        assert_eq!(lines[4], r#"{"kind":"command","tick":3,"command":{"type":"stop"}}"#);
        assert!(lines[5].starts_with(r#"{"kind":"frame","tick":4,"#));
    }

    #[test]
    fn mismatched_config_is_refused() {
        let rec = SessionRecord::read(&record(&[], 3)[..]).unwrap();
        let other = RuntimeConfig {
            turn_gain: 4.0,
            ..RuntimeConfig::default()
        };
        assert!(matches!(
            replay(&rec, other, |_| Ok(())),
            Err(SessionError::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn tampered_frame_is_located() {
        let text = String::from_utf8(record(&[], 10)).unwrap();
        let tampered = text.replacen(r#""tick":7,"t":0.14"#, r#""tick":7,"t":0.15"#, 1);
        assert_ne!(tampered, text);
        let rec = SessionRecord::read(tampered.as_bytes()).unwrap();
        let report = replay(&rec, RuntimeConfig::default(), |_| Ok(())).unwrap();
        assert_eq!(report.first_mismatch, Some(7));
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let bytes = record(&[], 4);
        let cut = bytes.len() - 40;
        let err = SessionRecord::read(&bytes[..cut]).unwrap_err();
        match err {
            SessionError::Parse { offset, line, .. } => {
                assert_eq!(line, 5);
                let last_line_start = bytes[..cut].iter().rposition(|b| *b == b'\n').unwrap() as u64 + 1;
                assert!(offset >= last_line_start && offset <= cut as u64, "{offset}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn first_line_must_be_header() {
        let err = SessionRecord::read(&br#"{"kind":"command","tick":0,"command":{"type":"stop"}}"#[..]).unwrap_err();
        assert!(matches!(err, SessionError::Parse { offset: 0, line: 1, .. }));
    }
}
