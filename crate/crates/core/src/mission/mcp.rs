//! Symbiosis ledger over a recorded event log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::twin::{MessageKind, TwinMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relationship {
    Mutualism,
    Commensalism,
    Parasitism,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McpRow {
    pub seq: u64,
    pub event: String,
    pub relationship: Relationship,
    pub rationale: String,
}

/// Physically safe range of a metric, as tagged by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeBand {
    pub lo: f64,
    pub hi: f64,
}

impl SafeBand {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// One row per operator exchange, auto-continue and ontology termination.
///
/// Operator decisions are mutualistic, timeouts commensal. An ontology
/// termination is parasitic when the fault reading that caused it lies
/// inside the scenario's safe band for that metric.
pub fn mcp_ledger(log: &[TwinMessage]) -> Vec<McpRow> {
    let mut bands: BTreeMap<String, SafeBand> = BTreeMap::new();
    let mut last_fault: Option<(String, Option<f64>)> = None;
    let mut rows = Vec::new();
    for m in log {
        match (m.kind, m.event()) {
            (MessageKind::MissionState, Some("init")) => {
                if let Some(b) = m.payload.get("safe_bands") {
                    bands = serde_json::from_value(b.clone()).unwrap_or_default();
                }
            }
            (MessageKind::Diagnosis, Some("raised")) => {
                let d = &m.payload["diagnosis"];
                if d["severity"] == "fault" {
                    let rule = d["rule_id"].as_str().unwrap_or_default().to_string();
                    last_fault = Some((rule, d["value"].as_f64()));
                }
            }
            (MessageKind::PromptResult, _) => {
                let id = m.payload["id"].as_str().unwrap_or_default();
                let (relationship, rationale) = match m.payload["decision"].as_str() {
                    Some("timeout") => (Relationship::Commensalism, "auto-continue"),
                    _ => (Relationship::Mutualism, "operator-decision"),
                };
                rows.push(McpRow {
                    seq: m.seq,
                    event: format!("prompt_result:{id}"),
                    relationship,
                    rationale: rationale.into(),
                });
            }
            (MessageKind::MissionState, Some("outcome")) => {
                let o = &m.payload["outcome"]["outcome"];
                if o["kind"] != "terminated_by_ontology" {
                    continue;
                }
                let misconfigured = last_fault.as_ref().is_some_and(|(rule, value)| {
                    match (bands.get(rule), value) {
                        (Some(b), Some(v)) => b.contains(*v),
                        _ => false,
                    }
                });
                let cause = o["cause"].as_str().unwrap_or_default();
                rows.push(McpRow {
                    seq: m.seq,
                    event: format!("terminated:{cause}"),
                    relationship: if misconfigured {
                        Relationship::Parasitism
                    } else {
                        Relationship::Mutualism
                    },
                    rationale: if misconfigured {
                        "fault-within-safe-band".into()
                    } else {
                        "autonomous-protection".into()
                    },
                });
            }
            _ => {}
        }
    }
    rows
}

/// Convenience for building band tables in scenario files and tests.
pub fn bands_value(bands: &BTreeMap<String, SafeBand>) -> Value {
    serde_json::to_value(bands).expect("bands serialize")
}
