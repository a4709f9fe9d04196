use std::collections::{BTreeSet, HashMap, HashSet};

use super::{OntologyModel, StateRef};

/// A broken model invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl Violation {
    fn new(rule: &'static str, detail: impl Into<String>) -> Self {
        Self {
            rule,
            detail: detail.into(),
        }
    }
}

/// Lists every invariant the model violates, in document order.
pub fn validate(model: &OntologyModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();

    for c in &model.components {
        if c.id.is_empty() || c.id.contains('.') {
            out.push(Violation::new("invalid-identifier", format!("component id `{}`", c.id)));
        }
        if !seen.insert(c.id.as_str()) {
            out.push(Violation::new("duplicate-component", c.id.clone()));
        }

        let mut labels: HashMap<&str, usize> = HashMap::new();
        for (_, label) in c.states.iter() {
            *labels.entry(label).or_default() += 1;
            if label.is_empty() || label.contains('.') {
                out.push(Violation::new("invalid-identifier", format!("{}.{label}", c.id)));
            }
        }
        let mut dup: Vec<&str> = labels
            .iter()
            .filter(|(_, n)| **n > 1)
            .map(|(l, _)| *l)
            .collect();
        dup.sort_unstable();
        for label in dup {
            // same label in two families means the partition is not disjoint
            let families = [&c.states.sensed, &c.states.possible, &c.states.normal]
                .iter()
                .filter(|f| f.iter().any(|s| s == label))
                .count();
            let rule = if families > 1 {
                "overlapping-state-sets"
            } else {
                "duplicate-state"
            };
            out.push(Violation::new(rule, format!("{}.{label}", c.id)));
        }

        let mut keys = BTreeSet::new();
        for t in &c.transitions {
            for end in [&t.from, &t.to] {
                if !c.states.contains(end) {
                    out.push(Violation::new(
                        "undeclared-transition-state",
                        format!("{}.{end}", c.id),
                    ));
                }
            }
            if !keys.insert((t.from.as_str(), t.event.label.as_str())) {
                out.push(Violation::new(
                    "nondeterministic-transition",
                    format!("{}: {} on {}", c.id, t.from, t.event.label),
                ));
            }
        }
    }

    for r in &model.relations {
        for end in [&r.subject, &r.object] {
            if !model.has_state(end) {
                out.push(Violation::new("dangling-relation", end.to_string()));
            }
        }
        if r.subject == r.object {
            out.push(Violation::new("self-loop", r.subject.to_string()));
        }
        if r.kind.requires_must() && r.modality != super::Modality::Must {
            out.push(Violation::new(
                "structural-relation-modality",
                format!("{} {:?} {}", r.subject, r.kind, r.object),
            ));
        }
    }

    let mut metrics: HashSet<&StateRef> = HashSet::new();
    for t in &model.thresholds {
        if !metrics.insert(&t.metric) {
            out.push(Violation::new("duplicate-threshold", t.metric.to_string()));
        }
        if model.component(&t.metric.component).is_none() {
            out.push(Violation::new("dangling-threshold", t.metric.to_string()));
        }
        if !t.warning.is_finite() || !t.fault.is_finite() {
            out.push(Violation::new("threshold-not-finite", t.metric.to_string()));
        } else {
            let ordered = match t.direction {
                super::Direction::Above => t.warning < t.fault,
                super::Direction::Below => t.warning > t.fault,
            };
            if !ordered {
                out.push(Violation::new("threshold-order", t.metric.to_string()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::*;

    fn comp(id: &str, sensed: &[&str], possible: &[&str], normal: &[&str]) -> ComponentSpec {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ComponentSpec {
            id: id.into(),
            sensed: true,
            states: StateSets {
                sensed: v(sensed),
                possible: v(possible),
                normal: v(normal),
            },
            transitions: vec![],
            properties: Default::default(),
        }
    }

    fn rules(model: &OntologyModel) -> Vec<&'static str> {
        validate(model).into_iter().map(|v| v.rule).collect()
    }

    #[test]
    fn duplicate_component_ids() {
        let m = OntologyModel {
            components: vec![comp("a", &[], &[], &["ok"]), comp("a", &[], &[], &["ok"])],
            ..Default::default()
        };
        assert_eq!(rules(&m), vec!["duplicate-component"]);
    }

    #[test]
    fn overlapping_and_duplicate_states() {
        let m = OntologyModel {
            components: vec![comp("a", &["x"], &["x"], &["ok", "ok"])],
            ..Default::default()
        };
        let r = rules(&m);
        assert!(r.contains(&"overlapping-state-sets"));
        assert!(r.contains(&"duplicate-state"));
    }

    #[test]
    fn transition_checks() {
        let mut c = comp("a", &["hot"], &[], &["ok"]);
        let ev = Event {
            kind: EventKind::Internal,
            label: "heat".into(),
        };
        c.transitions = vec![
            Transition { from: "ok".into(), event: ev.clone(), to: "hot".into() },
            Transition { from: "ok".into(), event: ev.clone(), to: "ok".into() },
            Transition { from: "gone".into(), event: ev, to: "ok".into() },
        ];
        let r = rules(&OntologyModel { components: vec![c], ..Default::default() });
        assert_eq!(r, vec!["nondeterministic-transition", "undeclared-transition-state"]);
    }

    #[test]
    fn relation_checks() {
        let m = OntologyModel {
            components: vec![comp("a", &["x"], &[], &["ok"]), comp("b", &["y"], &[], &["ok"])],
            relations: vec![
                Relation {
                    subject: StateRef::new("a", "x"),
                    kind: RelationKind::Hierarchical,
                    modality: Modality::Might,
                    object: StateRef::new("b", "y"),
                },
                Relation {
                    subject: StateRef::new("a", "x"),
                    kind: RelationKind::Causality,
                    modality: Modality::Must,
                    object: StateRef::new("a", "x"),
                },
                Relation {
                    subject: StateRef::new("a", "x"),
                    kind: RelationKind::Connection,
                    modality: Modality::Must,
                    object: StateRef::new("b", "y"),
                },
            ],
            ..Default::default()
        };
        assert_eq!(rules(&m), vec!["structural-relation-modality", "self-loop"]);
    }

    #[test]
    fn threshold_checks() {
        let m = OntologyModel {
            components: vec![comp("motor", &[], &[], &["ok"])],
            thresholds: vec![
                ThresholdRule::new("motor.temperature", "degC", Direction::Above, 100.0, 80.0),
                ThresholdRule::new("motor.temperature", "degC", Direction::Above, 80.0, 100.0),
                ThresholdRule::new("gps.fix", "", Direction::Below, 3.0, 1.0),
                ThresholdRule::new("motor.current", "A", Direction::Above, f64::NAN, 1.0),
            ],
            ..Default::default()
        };
        assert_eq!(
            rules(&m),
            vec![
                "threshold-order",
                "duplicate-threshold",
                "dangling-threshold",
                "threshold-not-finite"
            ]
        );
    }
}
