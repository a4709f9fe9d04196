use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MessageKind, TwinMessage};
use crate::reasoner::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertColor {
    Green,
    Amber,
    Red,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub color: AlertColor,
    pub headline: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveEntry {
    pub component: String,
    pub severity: Severity,
    pub message: String,
}

/// Everything an operator view needs, derived only from hub messages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub seq: u64,
    pub t_ms: u64,
    pub scenario: Option<String>,
    pub stage: Option<String>,
    pub mission_active: bool,
    pub pose: Option<Value>,
    pub telemetry: BTreeMap<String, Value>,
    pub components: BTreeSet<String>,
    pub active: BTreeMap<String, ActiveEntry>,
    pub alerts: BTreeMap<String, Alert>,
    pub prompts: BTreeMap<String, Value>,
    pub scans: BTreeMap<String, Value>,
    pub arms: Option<Value>,
    pub ghosts: BTreeMap<String, Value>,
    pub outcome: Option<Value>,
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

impl TwinState {
    /// Folds one message into the state.
    pub fn apply(&mut self, msg: &TwinMessage) {
        self.seq = msg.seq;
        self.t_ms = msg.t_ms;
        let p = &msg.payload;
        match msg.kind {
            MessageKind::Telemetry => {
                if let Some(Value::Object(r)) = p.get("readings") {
                    self.telemetry = r.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                }
                if let Some(pose) = p.get("pose") {
                    self.pose = Some(pose.clone());
                }
            }
            MessageKind::Diagnosis => {
                match msg.event() {
                    Some("raised") => {
                        if let Some(d) = p.get("diagnosis") {
                            if let (Some(rule), Ok(entry)) = (
                                str_field(d, "rule_id"),
                                serde_json::from_value::<ActiveEntry>(d.clone()),
                            ) {
                                self.components.insert(entry.component.clone());
                                self.active.insert(rule.to_string(), entry);
                            }
                        }
                    }
                    Some("cleared") => {
                        if let Some(rule) = p.get("clearance").and_then(|c| str_field(c, "rule_id")) {
                            self.active.remove(rule);
                        }
                    }
                    _ => {}
                }
                self.alerts = compute_alerts(&self.components, &self.active);
            }
            MessageKind::MissionState => match msg.event() {
                Some("init") => {
                    self.scenario = str_field(p, "scenario").map(str::to_string);
                    if let Some(Value::Array(cs)) = p.get("components") {
                        self.components = cs.iter().filter_map(|c| c.as_str().map(str::to_string)).collect();
                    }
                    self.alerts = compute_alerts(&self.components, &self.active);
                }
                Some("stage") => {
                    self.stage = str_field(p, "stage").map(str::to_string);
                    self.mission_active = true;
                }
                Some("outcome") => {
                    self.outcome = p.get("outcome").cloned();
                    self.mission_active = false;
                }
                Some("arms") => self.arms = p.get("arms").cloned(),
                _ => {}
            },
            MessageKind::Prompt => {
                if let Some(id) = str_field(p, "id") {
                    self.prompts.insert(id.to_string(), p.clone());
                }
            }
            MessageKind::PromptResult => {
                if let Some(id) = str_field(p, "id") {
                    self.prompts.remove(id);
                }
            }
            MessageKind::ScanResult => {
                if let Some(seg) = str_field(p, "segment") {
                    self.scans.insert(seg.to_string(), p.clone());
                }
            }
            MessageKind::GhostState => {
                if let Some(arm) = p.get("arm") {
                    let key = arm.to_string();
                    if p.get("cleared").and_then(Value::as_bool) == Some(true) {
                        self.ghosts.remove(&key);
                    } else {
                        self.ghosts.insert(key, p.clone());
                    }
                }
            }
            MessageKind::Alert
            | MessageKind::Ack
            | MessageKind::Nack
            | MessageKind::Snapshot
            | MessageKind::Command => {}
        }
    }

    pub fn fold<'a>(messages: impl IntoIterator<Item = &'a TwinMessage>) -> Self {
        let mut s = Self::default();
        for m in messages {
            s.apply(m);
        }
        s
    }

    pub fn to_value(&self) -> Value {
        crate::canonical::to_value(self)
    }
}

/// Red iff an active fault exists for the component, amber iff only warnings.
pub fn compute_alerts(
    components: &BTreeSet<String>,
    active: &BTreeMap<String, ActiveEntry>,
) -> BTreeMap<String, Alert> {
    let mut out: BTreeMap<String, Alert> = components
        .iter()
        .map(|c| {
            (
                c.clone(),
                Alert {
                    color: AlertColor::Green,
                    headline: String::new(),
                },
            )
        })
        .collect();
    for e in active.values() {
        let color = match e.severity {
            Severity::Fault => AlertColor::Red,
            Severity::Warning => AlertColor::Amber,
        };
        let slot = out.entry(e.component.clone()).or_insert(Alert {
            color: AlertColor::Green,
            headline: String::new(),
        });
        if color > slot.color {
            slot.color = color;
            slot.headline = e.message.clone();
        }
    }
    out
}
