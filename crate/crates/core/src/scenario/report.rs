use std::fmt::Write as _;

use serde::Serialize;

use crate::fmcw::{aid_report, AidReport, Classification, FmcwError, ScanEntry};
use crate::mission::{MissionOutcome, Stage};
use crate::twin::{MessageKind, TwinMessage};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageEntry {
    pub t_ms: u64,
    pub stage: Stage,
    pub description: String,
}

/// Numbered diagnosis marker on the timeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marker {
    pub n: usize,
    pub t_ms: u64,
    pub stage: Option<Stage>,
    pub component: String,
    pub severity: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timeline {
    pub stages: Vec<StageEntry>,
    pub markers: Vec<Marker>,
    pub outcome: Option<MissionOutcome>,
}

impl Timeline {
    pub fn end_stage(&self) -> Option<Stage> {
        self.outcome
            .as_ref()
            .map(|o| o.end_stage)
            .or_else(|| self.stages.last().map(|s| s.stage))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.stages {
            let _ = writeln!(out, "{:>9.1}s  stage {}  {}", s.t_ms as f64 / 1000.0, s.stage, s.description);
            for m in self.markers.iter().filter(|m| m.stage == Some(s.stage)) {
                let _ = writeln!(
                    out,
                    "{:>9.1}s    [{}] {} {}: {}",
                    m.t_ms as f64 / 1000.0,
                    m.n,
                    m.severity,
                    m.component,
                    m.message
                );
            }
        }
        if let Some(o) = &self.outcome {
            let kind = serde_json::to_value(&o.outcome).unwrap_or_default();
            let _ = writeln!(
                out,
                "end stage {}  outcome {}  exit {}",
                o.end_stage,
                kind["kind"].as_str().unwrap_or("?"),
                o.exit_code()
            );
        }
        out
    }
}

/// Stage entries and numbered markers for every raised diagnosis.
pub fn timeline(log: &[TwinMessage]) -> Timeline {
    let mut stages = Vec::new();
    let mut markers = Vec::new();
    let mut current = None;
    for m in log {
        match (m.kind, m.event()) {
            (MessageKind::MissionState, Some("stage")) => {
                if let Ok(stage) = serde_json::from_value::<Stage>(m.payload["stage"].clone()) {
                    current = Some(stage);
                    stages.push(StageEntry {
                        t_ms: m.t_ms,
                        stage,
                        description: stage.description().into(),
                    });
                }
            }
            (MessageKind::Diagnosis, Some("raised")) => {
                let d = &m.payload["diagnosis"];
                markers.push(Marker {
                    n: markers.len() + 1,
                    t_ms: m.t_ms,
                    stage: current,
                    component: d["component"].as_str().unwrap_or_default().into(),
                    severity: d["severity"].as_str().unwrap_or_default().into(),
                    message: d["message"].as_str().unwrap_or_default().into(),
                });
            }
            _ => {}
        }
    }
    Timeline {
        stages,
        markers,
        outcome: outcome_from_log(log),
    }
}

pub fn outcome_from_log(log: &[TwinMessage]) -> Option<MissionOutcome> {
    log.iter()
        .rev()
        .find(|m| m.kind == MessageKind::MissionState && m.event() == Some("outcome"))
        .and_then(|m| serde_json::from_value(m.payload["outcome"].clone()).ok())
}

/// Asset-integrity report from the scan results in a log.
pub fn aid_from_log(log: &[TwinMessage]) -> Result<AidReport, FmcwError> {
    let asset = log
        .iter()
        .find(|m| m.kind == MessageKind::MissionState && m.event() == Some("init"))
        .and_then(|m| m.payload["asset"].as_str())
        .unwrap_or("asset")
        .to_string();
    let mut entries = Vec::new();
    for m in log.iter().filter(|m| m.kind == MessageKind::ScanResult) {
        let p = &m.payload;
        let class: Classification = serde_json::from_value(p["class"].clone())
            .map_err(|e| FmcwError::Archive { line: m.seq as usize, reason: format!("scan_result class: {e}") })?;
        let mut e = ScanEntry::new(
            p["segment"].as_str().unwrap_or_default(),
            class,
            p["contrast"].as_f64().unwrap_or(1.0),
        );
        e.trace = p["trace"].as_str().unwrap_or_default().into();
        entries.push(e);
    }
    aid_report(&asset, &entries)
}
