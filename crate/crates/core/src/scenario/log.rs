use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::canonical;
use crate::mission::Stage;
use crate::twin::{MessageKind, TwinMessage, TwinState};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Recorded stream of hub messages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub messages: Vec<TwinMessage>,
}

impl EventLog {
    pub fn from_messages(messages: Vec<TwinMessage>) -> Self {
        Self { messages }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&m.to_line());
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        canonical::sha256_hex(self.text().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut messages = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let m = TwinMessage::from_line(line).map_err(|reason| LogError::Corrupt { line: i + 1, reason })?;
            messages.push(m);
        }
        Ok(Self { messages })
    }

    pub fn read(path: &Path) -> Result<Self, LogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        std::fs::write(path, self.text())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub checks: Vec<CheckResult>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn result(name: &'static str, failure: Option<String>) -> CheckResult {
    CheckResult {
        name,
        passed: failure.is_none(),
        detail: failure.unwrap_or_else(|| "ok".into()),
    }
}

/// Re-checks a recorded log against the pipeline invariants.
pub fn replay(log: &EventLog) -> ReplayReport {
    let m = &log.messages;
    ReplayReport {
        checks: vec![
            result("seq-integrity", seq_integrity(m)),
            result("snapshot-fold", snapshot_fold(m)),
            result("watchdog-safety", watchdog_safety(m)),
            result("outcome-soundness", outcome_soundness(m)),
            result("stage-monotonicity", stage_monotonicity(m)),
            result("prompt-liveness", prompt_liveness(m)),
        ],
    }
}

fn seq_integrity(m: &[TwinMessage]) -> Option<String> {
    let mut last_t = 0;
    for (i, msg) in m.iter().enumerate() {
        if msg.seq != i as u64 + 1 {
            return Some(format!("expected seq {} found {}", i + 1, msg.seq));
        }
        if msg.t_ms < last_t {
            return Some(format!("time goes backwards at seq {}", msg.seq));
        }
        last_t = msg.t_ms;
    }
    None
}

fn snapshot_fold(m: &[TwinMessage]) -> Option<String> {
    let mut state = TwinState::default();
    for msg in m {
        if msg.kind == MessageKind::Snapshot {
            if msg.payload["at_seq"].as_u64() != Some(msg.seq.saturating_sub(1)) {
                return Some(format!("snapshot at seq {} has wrong at_seq", msg.seq));
            }
            if msg.payload["state"] != state.to_value() {
                return Some(format!("snapshot at seq {} differs from fold", msg.seq));
            }
        }
        state.apply(msg);
    }
    None
}

fn is_goto(msg: &TwinMessage) -> bool {
    msg.kind == MessageKind::MissionState
        && msg.event() == Some("command")
        && msg.payload["command"]["command"] == "goto"
}

fn watchdog_safety(m: &[TwinMessage]) -> Option<String> {
    let mut halted = false;
    for msg in m {
        if halted && is_goto(msg) {
            return Some(format!("goto at seq {} after fault or outcome", msg.seq));
        }
        let fault = msg.kind == MessageKind::Diagnosis
            && msg.event() == Some("raised")
            && msg.payload["diagnosis"]["severity"] == "fault";
        let outcome = msg.kind == MessageKind::MissionState && msg.event() == Some("outcome");
        halted |= fault || outcome;
    }
    None
}

fn outcome_soundness(m: &[TwinMessage]) -> Option<String> {
    let mut planned = None;
    let mut scans = BTreeSet::new();
    let mut faults = 0;
    let mut outcomes = Vec::new();
    for msg in m {
        match (msg.kind, msg.event()) {
            (MessageKind::MissionState, Some("init")) => planned = msg.payload["scans_planned"].as_u64(),
            (MessageKind::ScanResult, _) => {
                scans.insert(msg.payload["segment"].as_str().unwrap_or_default().to_string());
            }
            (MessageKind::Diagnosis, Some("raised")) if msg.payload["diagnosis"]["severity"] == "fault" => faults += 1,
            (MessageKind::MissionState, Some("outcome")) => outcomes.push(msg),
            _ => {}
        }
    }
    let [outcome] = outcomes.as_slice() else {
        return Some(format!("expected one outcome, found {}", outcomes.len()));
    };
    let kind = &outcome.payload["outcome"]["outcome"];
    let complete = planned == Some(scans.len() as u64) && faults == 0;
    let detail = || format!("scans {}/{:?}, {faults} faults", scans.len(), planned);
    if kind["kind"] == "success" {
        return (!complete).then(|| format!("success with {}", detail()));
    }
    // an ontology termination needs a fault or accumulated warnings behind it
    let unexplained = kind["kind"] == "terminated_by_ontology" && faults == 0 && kind["cause"] != "warning-accumulation";
    unexplained.then(|| format!("ontology termination without a fault: {}", detail()))
}

fn stage_monotonicity(m: &[TwinMessage]) -> Option<String> {
    let mut seen = Vec::new();
    for msg in m {
        if msg.kind == MessageKind::MissionState && msg.event() == Some("stage") {
            let stage: Option<Stage> = serde_json::from_value(msg.payload["stage"].clone()).ok();
            let Some(stage) = stage else {
                return Some(format!("bad stage at seq {}", msg.seq));
            };
            seen.push(stage);
        }
    }
    if seen.iter().zip(Stage::ALL.iter()).all(|(a, b)| a == b) && seen.len() <= Stage::ALL.len() {
        None
    } else {
        Some(format!("stages {seen:?} are not a prefix of A..H"))
    }
}

fn prompt_liveness(m: &[TwinMessage]) -> Option<String> {
    let mut open: BTreeMap<String, u64> = BTreeMap::new();
    let mut done = BTreeSet::new();
    for msg in m {
        let id = msg.payload["id"].as_str().unwrap_or_default().to_string();
        match msg.kind {
            MessageKind::Prompt => {
                if open.contains_key(&id) || done.contains(&id) {
                    return Some(format!("prompt {id} issued twice"));
                }
                open.insert(id, msg.seq);
            }
            MessageKind::PromptResult => {
                if open.remove(&id).is_none() {
                    return Some(format!("result for {id} without an open prompt"));
                }
                done.insert(id);
            }
            _ => {}
        }
    }
    open.keys().next().map(|id| format!("prompt {id} never resolved"))
}
