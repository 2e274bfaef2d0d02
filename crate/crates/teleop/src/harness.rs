//! Headless runs driven by a command script.
//!
//! A script is JSON lines of `{"tick": N, "command": {...}}`, the same shape
//! as command lines in a session record (whose header and frame lines are
//! skipped, so a record doubles as a script). Blank lines and lines starting
//! with `#` are ignored.

use std::io::{BufRead, Write};

use gait_core::{Command, RuntimeConfig, TurnDirection};

use crate::session::{run_commands, CommandEntry, Header, SessionError, SessionWriter};

pub fn parse_script(input: impl BufRead) -> Result<Vec<CommandEntry>, SessionError> {
    #[derive(serde::Deserialize)]
    struct Line {
        #[serde(default)]
        kind: Option<String>,
        #[serde(flatten)]
        rest: serde_json::Value,
    }
    let mut out: Vec<CommandEntry> = Vec::new();
    let mut offset = 0u64;
    for (index, line) in input.lines().enumerate() {
        let text = line?;
        let start = offset;
        offset += text.len() as u64 + 1;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String, col: usize| SessionError::Parse {
            offset: start + col as u64,
            line: index + 1,
            message,
        };
        let parsed: Line = serde_json::from_str(&text).map_err(|e| err(e.to_string(), e.column().saturating_sub(1)))?;
        match parsed.kind.as_deref() {
            None | Some("command") => {}
            Some(_) => continue,
        }
        let entry: CommandEntry = serde_json::from_value(parsed.rest).map_err(|e| err(e.to_string(), 0))?;
        if out.last().is_some_and(|prev| prev.tick > entry.tick) {
            return Err(err("script ticks must be non-decreasing".into(), 0));
        }
        out.push(entry);
    }
    Ok(out)
}

/// Runs `frames` ticks, writing a complete session record (with no start
/// time) to `out`. Returns the number of commands the runtime accepted.
pub fn run_headless<W: Write>(
    config: RuntimeConfig,
    script: &[CommandEntry],
    frames: u64,
    out: W,
) -> Result<(usize, W), SessionError> {
    let mut writer = SessionWriter::new(out, &Header::new(&config, None))?;
    let mut applied = 0usize;
    let writer_cell = std::cell::RefCell::new(&mut writer);
    run_commands(
        config,
        script,
        frames,
        |c| {
            applied += 1;
            writer_cell.borrow_mut().command(c)
        },
        |line| writer_cell.borrow_mut().frame_line(line),
    )?;
    writer.flush()?;
    Ok((applied, writer.into_inner()))
}

/// A 60 s script at 50 Hz visiting all six gaits, both turns and three
/// frequencies.
pub fn tour_script() -> Vec<CommandEntry> {
    let at = |seconds: f64, command: Command| CommandEntry {
        tick: (seconds * 50.0).round() as u64,
        seq: None,
        client: None,
        command,
    };
    let gait = |name: &str| Command::SetGait { gait: name.into() };
    let hz = |hz: f64| Command::SetFrequency { hz };
    let turn = |direction| Command::SetTurn { direction };
    vec![
        at(0.0, hz(1.0)),
        at(5.0, gait("gallop")),
        at(10.0, gait("bound")),
        at(14.0, hz(1.5)),
        at(18.0, gait("walk")),
        at(22.0, hz(0.5)),
        at(26.0, gait("modified_trot_1")),
        at(30.0, hz(1.5)),
        at(32.0, gait("modified_trot_2")),
        at(36.0, gait("trot")),
        at(38.0, turn(TurnDirection::Left)),
        at(42.0, turn(TurnDirection::Right)),
        at(46.0, turn(TurnDirection::None)),
        at(48.0, hz(1.0)),
        at(50.0, Command::InjectDelta { leg: 2, dx: 0.05, dy: -0.02 }),
        at(52.0, gait("bound")),
        at(56.0, Command::Stop),
    ]
}

pub const TOUR_FRAMES: u64 = 3000;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_accepts_records_and_comments() {
        let text = "# tour\n\
            {\"kind\":\"header\",\"version\":1}\n\
            {\"tick\":0,\"command\":{\"type\":\"stop\"}}\n\
            \n\
            {\"kind\":\"command\",\"tick\":4,\"seq\":2,\"command\":{\"type\":\"set_frequency\",\"hz\":1.0}}\n";
        let script = parse_script(text.as_bytes()).unwrap();
        assert_eq!(script.len(), 2);
        assert_eq!(script[1].tick, 4);
        assert_eq!(script[1].seq, Some(2));
    }

    #[test]
    fn script_ticks_must_not_go_backwards() {
        let text = "{\"tick\":5,\"command\":{\"type\":\"stop\"}}\n{\"tick\":4,\"command\":{\"type\":\"stop\"}}\n";
        assert!(matches!(parse_script(text.as_bytes()), Err(SessionError::Parse { line: 2, .. })));
    }

    #[test]
    fn rejected_script_commands_are_not_recorded() {
        let script = vec![
            CommandEntry { tick: 1, seq: None, client: None, command: Command::SetGait { gait: "nope".into() } },
            CommandEntry { tick: 2, seq: None, client: None, command: Command::Stop },
        ];
        let (applied, bytes) = run_headless(RuntimeConfig::default(), &script, 5, Vec::new()).unwrap();
        assert_eq!(applied, 1);
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains("nope"));
    }

    #[test]
    fn tour_fits_in_sixty_seconds() {
        let script = tour_script();
        assert!(script.iter().all(|c| c.tick < TOUR_FRAMES));
    }
}
