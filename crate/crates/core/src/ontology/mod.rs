//! Reliability ontology: components with diagnosis automata, semantic
//! relations qualified by modality, and metric threshold rules.

mod document;
pub mod synth;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use document::{parse_ontology, serialize_ontology, size_metrics, SizeMetrics};
pub use validate::{validate, Violation};

/// Errors raised while loading an ontology document.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OntologyError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("validation failed: {rule} ({detail})")]
    Validation { rule: &'static str, detail: String },
}

impl OntologyError {
    /// Rule identifier for validation failures.
    pub fn rule_id(&self) -> Option<&'static str> {
        match self {
            OntologyError::Validation { rule, .. } => Some(rule),
            OntologyError::Parse { .. } => None,
        }
    }
}

/// Which of the three state families a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateClass {
    Sensed,
    Possible,
    Normal,
}

impl StateClass {
    pub fn is_abnormal(self) -> bool {
        !matches!(self, StateClass::Normal)
    }
}

/// Partitioned state labels of one component.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSets {
    #[serde(default)]
    pub sensed: Vec<String>,
    #[serde(default)]
    pub possible: Vec<String>,
    #[serde(default)]
    pub normal: Vec<String>,
}

impl StateSets {
    pub fn class_of(&self, label: &str) -> Option<StateClass> {
        if self.sensed.iter().any(|s| s == label) {
            Some(StateClass::Sensed)
        } else if self.possible.iter().any(|s| s == label) {
            Some(StateClass::Possible)
        } else if self.normal.iter().any(|s| s == label) {
            Some(StateClass::Normal)
        } else {
            None
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.class_of(label).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateClass, &str)> {
        self.sensed
            .iter()
            .map(|s| (StateClass::Sensed, s.as_str()))
            .chain(self.possible.iter().map(|s| (StateClass::Possible, s.as_str())))
            .chain(self.normal.iter().map(|s| (StateClass::Normal, s.as_str())))
    }

    /// Resting state of the automaton: the first normal label, if any.
    pub fn initial(&self) -> Option<&str> {
        self.normal.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Internal,
    TimeDriven,
    SpaceDriven,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub kind: EventKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: String,
    pub event: Event,
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    StandAlone,
    Reusable,
    Valid,
    Available,
}

/// One critical part of the platform and its diagnosis automaton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub id: String,
    pub sensed: bool,
    #[serde(default)]
    pub states: StateSets,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub properties: BTreeSet<Property>,
}

impl ComponentSpec {
    /// Target of the transition leaving `from` on the event labelled `label`.
    pub fn next_state(&self, from: &str, label: &str) -> Option<&str> {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.event.label == label)
            .map(|t| t.to.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Causality,
    Implication,
    Prevention,
    Hierarchical,
    Composition,
    Aggregation,
    Optional,
    Connection,
}

impl RelationKind {
    /// Relation kinds along which abnormal states propagate forward.
    pub fn propagates(self) -> bool {
        matches!(self, RelationKind::Causality | RelationKind::Implication)
    }

    /// Structural relations must be stated with full certainty.
    pub fn requires_must(self) -> bool {
        matches!(self, RelationKind::Hierarchical | RelationKind::Connection)
    }
}

/// Certainty qualifier of a relation, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Must,
    Would,
    Should,
    Might,
    Could,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Must,
        Modality::Would,
        Modality::Should,
        Modality::Might,
        Modality::Could,
    ];

    pub fn certainty(self) -> f64 {
        modality_certainty(self)
    }
}

/// Fixed certainty attached to each modal verb.
pub fn modality_certainty(m: Modality) -> f64 {
    match m {
        Modality::Must => 1.0,
        Modality::Would => 0.9,
        Modality::Should => 0.75,
        Modality::Might => 0.5,
        Modality::Could => 0.25,
    }
}

/// A `component.state` reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateRef {
    pub component: String,
    pub state: String,
}

impl StateRef {
    pub fn new(component: impl Into<String>, state: impl Into<String>) -> Self {
        Self {
            component: component.into(),
            state: state.into(),
        }
    }
}

impl fmt::Display for StateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.state)
    }
}

impl FromStr for StateRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((c, st)) if !c.is_empty() && !st.is_empty() => Ok(StateRef::new(c, st)),
            _ => Err(format!("expected `component.state`, got `{s}`")),
        }
    }
}

impl Serialize for StateRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub subject: StateRef,
    pub kind: RelationKind,
    pub modality: Modality,
    pub object: StateRef,
}

/// A `component.metric` reference. Same textual shape as [`StateRef`].
pub type MetricRef = StateRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Above,
    Below,
}

/// Two-level threshold on one telemetry metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRule {
    pub metric: MetricRef,
    #[serde(default)]
    pub units: String,
    pub direction: Direction,
    pub warning: f64,
    pub fault: f64,
}

impl ThresholdRule {
    pub fn new(metric: &str, units: &str, direction: Direction, warning: f64, fault: f64) -> Self {
        Self {
            metric: metric.parse().expect("component.metric"),
            units: units.to_string(),
            direction,
            warning,
            fault,
        }
    }

    pub fn id(&self) -> String {
        self.metric.to_string()
    }

    pub fn component(&self) -> &str {
        &self.metric.component
    }

    fn crosses(&self, value: f64, limit: f64) -> bool {
        match self.direction {
            Direction::Above => value > limit,
            Direction::Below => value < limit,
        }
    }

    pub fn fault_holds(&self, value: f64) -> bool {
        self.crosses(value, self.fault)
    }

    pub fn warning_holds(&self, value: f64) -> bool {
        self.crosses(value, self.warning)
    }

    /// Platform defaults: motor temperature, CPU/RAM usage and battery SoC.
    pub fn defaults() -> Vec<ThresholdRule> {
        vec![
            ThresholdRule::new("motor.temperature", "degC", Direction::Above, 80.0, 100.0),
            ThresholdRule::new("compute.cpu", "%", Direction::Above, 85.0, 95.0),
            ThresholdRule::new("compute.ram", "%", Direction::Above, 85.0, 95.0),
            ThresholdRule::new("battery.soc", "%", Direction::Below, 25.0, 15.0),
        ]
    }
}

/// The complete ontology. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyModel {
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub thresholds: Vec<ThresholdRule>,
}

impl OntologyModel {
    pub fn component(&self, id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn has_state(&self, r: &StateRef) -> bool {
        self.component(&r.component)
            .is_some_and(|c| c.states.contains(&r.state))
    }

    pub fn state_class(&self, r: &StateRef) -> Option<StateClass> {
        self.component(&r.component)
            .and_then(|c| c.states.class_of(&r.state))
    }

    pub fn threshold(&self, metric: &str) -> Option<&ThresholdRule> {
        self.thresholds.iter().find(|t| t.metric.to_string() == metric)
    }
}
