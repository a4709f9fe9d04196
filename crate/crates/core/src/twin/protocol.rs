use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Telemetry,
    Diagnosis,
    MissionState,
    Prompt,
    PromptResult,
    ScanResult,
    GhostState,
    Alert,
    Ack,
    Nack,
    Snapshot,
    /// Client-to-hub envelope; never published.
    Command,
}

/// Wire frame shared by both transports and the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinMessage {
    pub seq: u64,
    pub t_ms: u64,
    pub kind: MessageKind,
    pub payload: Value,
}

impl TwinMessage {
    pub fn to_line(&self) -> String {
        canonical::to_line(self)
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }

    pub fn event(&self) -> Option<&str> {
        self.payload.get("event").and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorDecision {
    Continue,
    Terminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorCommand {
    StartMission,
    Terminate,
    PromptResponse { id: String, decision: OperatorDecision },
    GhostSet { arm: usize, joints: [f64; 6] },
    GhostCommit,
    SetSpeed { factor: f64 },
    Hello { last_seq: u64 },
}

impl OperatorCommand {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorCommand::StartMission => "start_mission",
            OperatorCommand::Terminate => "terminate",
            OperatorCommand::PromptResponse { .. } => "prompt_response",
            OperatorCommand::GhostSet { .. } => "ghost_set",
            OperatorCommand::GhostCommit => "ghost_commit",
            OperatorCommand::SetSpeed { .. } => "set_speed",
            OperatorCommand::Hello { .. } => "hello",
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            OperatorCommand::GhostSet { joints, .. } if joints.iter().any(|j| !j.is_finite()) => {
                Err("joints must be finite".into())
            }
            OperatorCommand::SetSpeed { factor } if !(factor.is_finite() && *factor >= 0.0) => {
                Err("speed factor must be finite and non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

/// Parses a client frame: either a full envelope with kind `command` or a
/// bare command object.
pub fn parse_command(line: &str) -> Result<OperatorCommand, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let body = match v.get("kind").and_then(Value::as_str) {
        Some("command") => v.get("payload").cloned().ok_or("envelope without payload")?,
        _ => v,
    };
    let cmd: OperatorCommand = serde_json::from_value(body.clone()).map_err(|e| e.to_string())?;
    // unit variants ignore extra keys, so compare key sets explicitly
    let expected = serde_json::to_value(&cmd).map_err(|e| e.to_string())?;
    let keys = |v: &Value| -> Vec<String> {
        v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default()
    };
    if keys(&body) != keys(&expected) {
        return Err("unexpected fields in command".into());
    }
    cmd.check()?;
    Ok(cmd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn command_parsing() {
        assert_eq!(parse_command(r#"{"kind":"terminate"}"#), Ok(OperatorCommand::Terminate));
        assert_eq!(
            parse_command(r#"{"seq":1,"t_ms":0,"kind":"command","payload":{"kind":"prompt_response","id":"p1","decision":"continue"}}"#),
            Ok(OperatorCommand::PromptResponse { id: "p1".into(), decision: OperatorDecision::Continue })
        );
        assert!(parse_command(r#"{"kind":"ghost_set","arm":0,"joints":[0,0,0]}"#).is_err());
        assert!(parse_command(r#"{"kind":"prompt_response","id":"p1","decision":"maybe"}"#).is_err());
        assert!(parse_command(r#"{"kind":"terminate","extra":1}"#).is_err());
        assert!(parse_command(r#"{"kind":"set_speed","factor":-1}"#).is_err());
        assert!(parse_command("not json").is_err());
    }

    #[test]
    fn frame_round_trip() {
        let m = TwinMessage {
            seq: 3,
            t_ms: 100,
            kind: MessageKind::PromptResult,
            payload: json!({"id": "p1", "decision": "timeout"}),
        };
        let line = m.to_line();
        assert_eq!(
            line,
            r#"{"kind":"prompt_result","payload":{"decision":"timeout","id":"p1"},"seq":3,"t_ms":100}"#
        );
        assert_eq!(TwinMessage::from_line(&line).unwrap(), m);
    }
}
