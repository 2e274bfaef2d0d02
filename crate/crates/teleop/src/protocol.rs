//! JSON messages exchanged with websocket clients.
//!
//! Up: one command object per text message, e.g.
//! `{"type":"set_gait","gait":"trot","seq":7}`. The optional `client` field
//! names the sender; sequence numbers must strictly increase per client.
//!
//! Down: a `hello` on connect, one `frame` per (decimated) tick, and a
//! `reply` for every command.

use std::collections::HashMap;

use gait_core::{Ack, Command, RuntimeConfig, TelemetryFrame};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    #[serde(flatten)]
    pub command: Command,
}

/// Parses one inbound text message. On failure returns the reason and, when
/// the message was at least a JSON object with a numeric `seq`, that number.
pub fn parse_command(text: &str) -> Result<CommandMessage, (String, Option<u64>)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| (format!("malformed JSON: {e}"), None))?;
    let seq = value.get("seq").and_then(serde_json::Value::as_u64);
    if seq.is_none() {
        return Err(("missing or invalid 'seq'".into(), None));
    }
    let msg: CommandMessage =
        serde_json::from_value(value).map_err(|e| (format!("invalid command: {e}"), seq))?;
    validate_payload(&msg.command).map_err(|reason| (reason, seq))?;
    Ok(msg)
}

/// Shape checks that need no runtime state. Checks that depend on the
/// library or limits happen when the runtime applies the command.
pub fn validate_payload(command: &Command) -> Result<(), String> {
    match command {
        Command::SetGait { gait } if gait.is_empty() => Err("gait name is empty".into()),
        Command::SetFrequency { hz } if !hz.is_finite() => Err("hz must be finite".into()),
        Command::InjectDelta { dx, dy, .. } if !(dx.is_finite() && dy.is_finite()) => {
            Err("delta must be finite".into())
        }
        _ => Ok(()),
    }
}

/// Enforces strictly increasing sequence numbers per client id.
#[derive(Debug, Default)]
pub struct SequenceTracker {
    last: HashMap<String, u64>,
}

impl SequenceTracker {
    pub fn check(&mut self, client: &str, seq: u64) -> Result<(), String> {
        match self.last.get(client) {
            Some(&prev) if seq <= prev => Err(format!(
                "seq {seq} does not increase (last accepted {prev} from '{client}')"
            )),
            _ => {
                self.last.insert(client.to_string(), seq);
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "reply")]
pub struct Reply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Absent only when the message carried no readable `seq`.
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changed: Option<bool>,
}

impl Reply {
    pub fn accepted(seq: u64, ack: Ack) -> Self {
        Self {
            ok: true,
            reason: None,
            seq: Some(seq),
            changed: Some(ack == Ack::Applied),
        }
    }

    pub fn rejected(reason: impl Into<String>, seq: Option<u64>) -> Self {
        Self {
            ok: false,
            reason: Some(reason.into()),
            seq,
            changed: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "hello")]
pub struct Hello {
    pub gaits: Vec<String>,
    pub rate_hz: f64,
    pub decimate: u32,
    pub leg_names: Vec<String>,
    pub max_frequency_hz: f64,
}

impl Hello {
    pub fn new(config: &RuntimeConfig, decimate: u32) -> Self {
        Self {
            gaits: config.gaits.names().map(String::from).collect(),
            rate_hz: config.command_rate_hz,
            decimate,
            leg_names: config.leg_names.to_vec(),
            max_frequency_hz: config.max_frequency_hz,
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename = "frame")]
struct FrameRef<'a> {
    #[serde(flatten)]
    frame: &'a TelemetryFrame,
}

/// The `{"kind":"frame", ...}` line used both on the wire and in records.
pub fn frame_json(frame: &TelemetryFrame) -> String {
    serde_json::to_string(&FrameRef { frame }).expect("frame serializes")
}

/// Inverse of [`frame_json`].
pub fn parse_frame(text: &str) -> serde_json::Result<TelemetryFrame> {
    #[derive(Deserialize)]
    struct Tagged {
        kind: String,
        #[serde(flatten)]
        frame: TelemetryFrame,
    }
    let tagged: Tagged = serde_json::from_str(text)?;
    if tagged.kind != "frame" {
        return Err(serde::de::Error::custom(format!("expected a frame, got '{}'", tagged.kind)));
    }
    Ok(tagged.frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gait_core::TurnDirection;

    #[test]
    fn wire_example_parses() {
        let msg = parse_command(r#"{"type":"set_gait","gait":"trot","seq":7}"#).unwrap();
        assert_eq!(msg.seq, 7);
        assert_eq!(msg.command, Command::SetGait { gait: "trot".into() });
        let msg = parse_command(r#"{"type":"set_turn","direction":"left","seq":1,"client":"kb"}"#).unwrap();
        assert_eq!(msg.client.as_deref(), Some("kb"));
        assert_eq!(msg.command, Command::SetTurn { direction: TurnDirection::Left });
        let msg = parse_command(r#"{"type":"stop","seq":2}"#).unwrap();
        assert_eq!(msg.command, Command::Stop);
    }

    #[test]
    fn bad_messages_report_reason_and_seq() {
        let (_, seq) = parse_command("{not json").unwrap_err();
        assert_eq!(seq, None);
        let (_, seq) = parse_command(r#"{"type":"set_gait"}"#).unwrap_err();
        assert_eq!(seq, None);
        let (reason, seq) = parse_command(r#"{"type":"fly","seq":3}"#).unwrap_err();
        assert_eq!(seq, Some(3));
        assert!(reason.contains("invalid command"));
        let (_, seq) = parse_command(r#"{"type":"set_turn","direction":"up","seq":4}"#).unwrap_err();
        assert_eq!(seq, Some(4));
        let (_, seq) = parse_command(r#"{"type":"set_gait","gait":"","seq":5}"#).unwrap_err();
        assert_eq!(seq, Some(5));
    }

    #[test]
    fn error_reply_shape() {
        let text = Reply::rejected("unknown gait 'x'", Some(9)).to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["ok"], false);
        assert_eq!(v["reason"], "unknown gait 'x'");
        assert_eq!(v["seq"], 9);
        let ok: serde_json::Value = serde_json::from_str(&Reply::accepted(3, Ack::Applied).to_json()).unwrap();
        assert_eq!(ok["ok"], true);
        assert_eq!(ok["seq"], 3);
    }

    #[test]
    fn sequence_must_increase_per_client() {
        let mut t = SequenceTracker::default();
        t.check("a", 1).unwrap();
        t.check("b", 1).unwrap();
        assert!(t.check("a", 1).is_err());
        assert!(t.check("a", 0).is_err());
        t.check("a", 5).unwrap();
    }

    #[test]
    fn frame_round_trip() {
        let mut rt = gait_core::GaitRuntime::new(RuntimeConfig::default()).unwrap();
        let frame = rt.tick().unwrap();
        let text = frame_json(&frame);
        assert!(text.starts_with(r#"{"kind":"frame","tick":1,"#));
        assert_eq!(parse_frame(&text).unwrap(), frame);
    }
}
