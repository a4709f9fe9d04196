//! Run-time reliability reasoner.
//!
//! Telemetry frames are ingested in time order; each `evaluate` cycle checks
//! every threshold rule against the latest readings, drives the component
//! diagnosis automata and reports warning/fault diagnoses. Fault comparisons
//! always win over warning comparisons for the same metric.

mod escalate;
mod predict;
mod root_cause;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ontology::{Direction, OntologyModel, StateRef, ThresholdRule};

pub use escalate::{escalate, EscalationDirective, EscalationKind, EscalationTrigger};
pub use predict::{fit_line, predict_crossing, predict_low_battery, LineFit};
pub use root_cause::{root_cause, CauseChain, CauseLink};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReasonerError {
    #[error("frame at {got} ms does not advance past {last} ms")]
    OutOfOrderFrame { last: u64, got: u64 },
    #[error("reading `{0}` is not finite")]
    NonFiniteReading(String),
    #[error("no telemetry has been ingested")]
    NotReady,
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("at least two samples are required, got {0}")]
    InsufficientHistory(usize),
}

/// One timestamped set of metric readings keyed by `component.metric`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub t_ms: u64,
    pub readings: BTreeMap<String, f64>,
}

impl TelemetryFrame {
    pub fn new(t_ms: u64) -> Self {
        Self {
            t_ms,
            readings: BTreeMap::new(),
        }
    }

    pub fn with(mut self, metric: &str, value: f64) -> Self {
        self.readings.insert(metric.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Fault,
}

/// A finding emitted by one evaluation cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub t_ms: u64,
    pub component: String,
    pub severity: Severity,
    pub state: String,
    pub certainty: f64,
    pub rule_id: String,
    pub message: String,
    /// Reading that triggered a threshold diagnosis; absent for inferred ones.
    pub value: Option<f64>,
    /// Already reported in an earlier cycle and still active.
    pub repeat: bool,
}

impl Diagnosis {
    pub fn state_ref(&self) -> StateRef {
        StateRef::new(&self.component, &self.state)
    }

    fn sort_key(&self) -> (std::cmp::Reverse<Severity>, &str, &str) {
        (std::cmp::Reverse(self.severity), &self.component, &self.rule_id)
    }
}

/// Sorts diagnoses by severity (faults first), then component, then rule.
pub fn sort_diagnoses(ds: &mut [Diagnosis]) {
    ds.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// A diagnosis that stopped holding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clearance {
    pub t_ms: u64,
    pub component: String,
    pub rule_id: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReasonerConfig {
    /// History window length per metric.
    pub window: usize,
    /// Distinct concurrent warnings that trigger recovery.
    pub escalation_count: usize,
    /// Consecutive quiet cycles before an active diagnosis clears.
    pub clear_after: u32,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            window: 60,
            escalation_count: 3,
            clear_after: 3,
        }
    }
}

/// Operator-facing wording for a rule, keyed on the metric name.
pub fn rule_headline(rule: &ThresholdRule) -> String {
    let metric = rule.metric.state.as_str();
    match metric {
        "temperature" => format!("{} is hot", capitalize(rule.component())),
        "cpu" | "ram" | "usage" => "Software is consuming resources".to_string(),
        "soc" => "Low battery".to_string(),
        _ => {
            let dir = match rule.direction {
                Direction::Above => "high",
                Direction::Below => "low",
            };
            format!("{} {} {}", capitalize(rule.component()), metric, dir)
        }
    }
}

/// Short cause slug used in mission outcomes.
pub fn rule_cause(rule_id: &str) -> String {
    match rule_id.split_once('.').map(|(_, m)| m) {
        Some("soc") => "low-battery".into(),
        Some("temperature") => "overheating".into(),
        Some("cpu" | "ram" | "usage") => "resource-exhaustion".into(),
        _ => rule_id.to_string(),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Fallback state label when the automaton has no matching transition.
pub fn default_state_label(rule: &ThresholdRule) -> String {
    let dir = match rule.direction {
        Direction::Above => "high",
        Direction::Below => "low",
    };
    format!("{}_{}", rule.metric.state, dir)
}

#[derive(Debug, Clone)]
struct ActiveRule {
    severity: Severity,
    quiet: u32,
    state: String,
}

#[derive(Debug, Clone)]
struct RuleSlot {
    rule: ThresholdRule,
    id: String,
    headline: String,
    component: usize,
    active: Option<ActiveRule>,
}

#[derive(Debug, Clone)]
struct InferenceEdge {
    subject: StateRef,
    object: StateRef,
    certainty: f64,
}

/// Single-owner reasoner state machine.
#[derive(Debug, Clone)]
pub struct Reasoner {
    model: Arc<OntologyModel>,
    config: ReasonerConfig,
    slots: Vec<RuleSlot>,
    automata: Vec<Option<String>>,
    latest: HashMap<String, f64>,
    history: HashMap<String, VecDeque<(u64, f64)>>,
    last_t: Option<u64>,
    inference: Vec<InferenceEdge>,
    inferred: BTreeMap<String, Diagnosis>,
    cleared: Vec<Clearance>,
}

impl Reasoner {
    pub fn new(model: Arc<OntologyModel>) -> Self {
        Self::with_config(model, ReasonerConfig::default())
    }

    pub fn with_config(model: Arc<OntologyModel>, config: ReasonerConfig) -> Self {
        let index: HashMap<&str, usize> = model
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        let slots = model
            .thresholds
            .iter()
            .map(|rule| RuleSlot {
                id: rule.id(),
                headline: rule_headline(rule),
                component: index.get(rule.component()).copied().unwrap_or(usize::MAX),
                rule: rule.clone(),
                active: None,
            })
            .collect();
        let automata = model
            .components
            .iter()
            .map(|c| c.states.initial().map(str::to_string))
            .collect();
        let inference = model
            .relations
            .iter()
            .filter(|r| r.kind.propagates())
            .filter(|r| model.component(&r.object.component).is_some_and(|c| !c.sensed))
            .map(|r| InferenceEdge {
                subject: r.subject.clone(),
                object: r.object.clone(),
                certainty: r.modality.certainty(),
            })
            .collect();
        Self {
            model,
            config,
            slots,
            automata,
            latest: HashMap::new(),
            history: HashMap::new(),
            last_t: None,
            inference,
            inferred: BTreeMap::new(),
            cleared: Vec::new(),
        }
    }

    pub fn model(&self) -> &Arc<OntologyModel> {
        &self.model
    }

    pub fn config(&self) -> &ReasonerConfig {
        &self.config
    }

    pub fn ingest(&mut self, frame: &TelemetryFrame) -> Result<(), ReasonerError> {
        if let Some(last) = self.last_t {
            if frame.t_ms <= last {
                return Err(ReasonerError::OutOfOrderFrame {
                    last,
                    got: frame.t_ms,
                });
            }
        }
        if let Some((k, _)) = frame.readings.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ReasonerError::NonFiniteReading(k.clone()));
        }
        self.last_t = Some(frame.t_ms);
        for (k, &v) in &frame.readings {
            match self.latest.get_mut(k.as_str()) {
                Some(slot) => *slot = v,
                None => {
                    self.latest.insert(k.clone(), v);
                }
            }
            let hist = match self.history.get_mut(k.as_str()) {
                Some(h) => h,
                None => self
                    .history
                    .entry(k.clone())
                    .or_insert_with(|| VecDeque::with_capacity(self.config.window)),
            };
            if hist.len() == self.config.window {
                hist.pop_front();
            }
            hist.push_back((frame.t_ms, v));
        }
        Ok(())
    }

    /// Retained samples for `metric`, oldest first.
    pub fn history(&self, metric: &str) -> Vec<(u64, f64)> {
        self.history
            .get(metric)
            .map(|h| h.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn latest(&self, metric: &str) -> Option<f64> {
        self.latest.get(metric).copied()
    }

    /// Current automaton state of a component.
    pub fn component_state(&self, component: &str) -> Option<&str> {
        let i = self.model.components.iter().position(|c| c.id == component)?;
        self.automata[i].as_deref()
    }

    fn fire(&mut self, component: usize, label: &str) {
        if component == usize::MAX {
            return;
        }
        let spec = &self.model.components[component];
        if let Some(cur) = self.automata[component].as_deref() {
            if let Some(next) = spec.next_state(cur, label) {
                self.automata[component] = Some(next.to_string());
            }
        }
    }

    fn abnormal_label(&self, slot: usize) -> String {
        let s = &self.slots[slot];
        if s.component != usize::MAX {
            let spec = &self.model.components[s.component];
            if let Some(cur) = self.automata[s.component].as_deref() {
                if spec.states.class_of(cur).is_some_and(|c| c.is_abnormal()) {
                    return cur.to_string();
                }
            }
        }
        default_state_label(&s.rule)
    }

    /// Runs one evaluation cycle at sim-time `now`.
    pub fn evaluate(&mut self, now: u64) -> Result<Vec<Diagnosis>, ReasonerError> {
        if self.last_t.is_none() {
            return Err(ReasonerError::NotReady);
        }
        self.cleared.clear();
        let mut out = Vec::new();
        for i in 0..self.slots.len() {
            let value = self.latest.get(self.slots[i].id.as_str()).copied();
            let rule = &self.slots[i].rule;
            let level = value.and_then(|v| {
                if rule.fault_holds(v) {
                    Some(Severity::Fault)
                } else if rule.warning_holds(v) {
                    Some(Severity::Warning)
                } else {
                    None
                }
            });
            let comp = self.slots[i].component;
            let (severity, repeat) = match (level, self.slots[i].active.as_ref().map(|a| a.severity)) {
                (Some(sev), None) => {
                    self.fire(comp, &format!("{}:{}", self.slots[i].id, level_name(sev)));
                    let state = self.abnormal_label(i);
                    self.slots[i].active = Some(ActiveRule { severity: sev, quiet: 0, state });
                    (sev, false)
                }
                (Some(sev), Some(prev)) => {
                    let changed = sev != prev;
                    if changed {
                        self.fire(comp, &format!("{}:{}", self.slots[i].id, level_name(sev)));
                        let state = self.abnormal_label(i);
                        let a = self.slots[i].active.as_mut().expect("active");
                        a.severity = sev;
                        a.state = state;
                    }
                    self.slots[i].active.as_mut().expect("active").quiet = 0;
                    (sev, !changed)
                }
                (None, Some(prev)) => {
                    let a = self.slots[i].active.as_mut().expect("active");
                    a.quiet += 1;
                    if a.quiet >= self.config.clear_after {
                        self.slots[i].active = None;
                        self.fire(comp, &format!("{}:clear", self.slots[i].id));
                        let s = &self.slots[i];
                        self.cleared.push(Clearance {
                            t_ms: now,
                            component: s.rule.component().to_string(),
                            rule_id: s.id.clone(),
                            severity: prev,
                        });
                        continue;
                    }
                    (prev, true)
                }
                (None, None) => continue,
            };
            let s = &self.slots[i];
            out.push(Diagnosis {
                t_ms: now,
                component: s.rule.component().to_string(),
                severity,
                state: s.active.as_ref().expect("active").state.clone(),
                certainty: 1.0,
                rule_id: s.id.clone(),
                message: s.headline.clone(),
                value,
                repeat,
            });
        }
        if !self.inference.is_empty() {
            self.infer(now, &mut out);
        }
        sort_diagnoses(&mut out);
        Ok(out)
    }

    /// Propagates active abnormal states onto non-sensed components.
    fn infer(&mut self, now: u64, out: &mut Vec<Diagnosis>) {
        let active = self.active_states_from(out);
        let mut best: BTreeMap<String, (&InferenceEdge, f64)> = BTreeMap::new();
        for e in &self.inference {
            if active.contains(&e.subject) {
                let id = format!("infer:{}", e.object);
                let cur = best.get(&id).map(|(_, c)| *c).unwrap_or(0.0);
                if e.certainty > cur {
                    best.insert(id, (e, e.certainty));
                }
            }
        }
        let mut next = BTreeMap::new();
        for (id, (e, certainty)) in best {
            let repeat = self.inferred.contains_key(&id);
            let d = Diagnosis {
                t_ms: now,
                component: e.object.component.clone(),
                severity: Severity::Warning,
                state: e.object.state.clone(),
                certainty,
                rule_id: id.clone(),
                message: format!(
                    "Possible {} in {} (from {})",
                    e.object.state.replace('_', " "),
                    e.object.component,
                    e.subject
                ),
                value: None,
                repeat,
            };
            out.push(d.clone());
            next.insert(id, d);
        }
        for (id, d) in &self.inferred {
            if !next.contains_key(id) {
                self.cleared.push(Clearance {
                    t_ms: now,
                    component: d.component.clone(),
                    rule_id: id.clone(),
                    severity: d.severity,
                });
            }
        }
        self.inferred = next;
    }

    fn active_states_from(&self, diags: &[Diagnosis]) -> BTreeSet<StateRef> {
        let mut set: BTreeSet<StateRef> = diags.iter().map(Diagnosis::state_ref).collect();
        for (i, cur) in self.automata.iter().enumerate() {
            if let Some(cur) = cur {
                let spec = &self.model.components[i];
                if spec.states.class_of(cur).is_some_and(|c| c.is_abnormal()) {
                    set.insert(StateRef::new(&spec.id, cur));
                }
            }
        }
        set
    }

    /// Abnormal states currently held by automata or active diagnoses.
    pub fn active_states(&self) -> BTreeSet<StateRef> {
        let active: Vec<Diagnosis> = self.active_diagnoses();
        self.active_states_from(&active)
    }

    /// Diagnoses that are currently active (including ones in hysteresis).
    pub fn active_diagnoses(&self) -> Vec<Diagnosis> {
        let now = self.last_t.unwrap_or(0);
        let mut out: Vec<Diagnosis> = self
            .slots
            .iter()
            .filter_map(|s| {
                let a = s.active.as_ref()?;
                Some(Diagnosis {
                    t_ms: now,
                    component: s.rule.component().to_string(),
                    severity: a.severity,
                    state: a.state.clone(),
                    certainty: 1.0,
                    rule_id: s.id.clone(),
                    message: s.headline.clone(),
                    value: self.latest.get(s.id.as_str()).copied(),
                    repeat: true,
                })
            })
            .chain(self.inferred.values().cloned())
            .collect();
        sort_diagnoses(&mut out);
        out
    }

    /// Clearances produced by the most recent `evaluate`.
    pub fn cleared(&self) -> &[Clearance] {
        &self.cleared
    }

    /// Escalation decision over the currently active diagnoses.
    pub fn escalation(&self) -> Option<EscalationDirective> {
        escalate(&self.active_diagnoses(), self.config.escalation_count)
    }

    /// Root-cause chain for `d` against the reasoner's active states.
    pub fn root_cause(&self, d: &Diagnosis) -> Result<CauseChain, ReasonerError> {
        root_cause(d, &self.model, &self.active_states())
    }

    /// Seconds from the latest sample until `metric` crosses its fault level,
    /// projected from a least-squares fit over the history window.
    pub fn time_to_fault(&self, metric: &str) -> Result<Option<f64>, ReasonerError> {
        let rule = self
            .slots
            .iter()
            .find(|s| s.id == metric)
            .map(|s| &s.rule)
            .ok_or_else(|| ReasonerError::UnknownComponent(metric.to_string()))?;
        let hist = self.history(metric);
        let Some(&(t_last, _)) = hist.last() else {
            return Err(ReasonerError::InsufficientHistory(0));
        };
        let t0 = hist[0].0;
        let samples: Vec<(f64, f64)> = hist
            .iter()
            .map(|&(t, v)| ((t - t0) as f64 / 1000.0, v))
            .collect();
        let crossing = predict_crossing(&samples, rule.fault, rule.direction)?;
        let elapsed = (t_last - t0) as f64 / 1000.0;
        Ok(crossing.map(|c| (c - elapsed).max(0.0)))
    }
}

fn level_name(s: Severity) -> &'static str {
    match s {
        Severity::Warning => "warning",
        Severity::Fault => "fault",
    }
}
