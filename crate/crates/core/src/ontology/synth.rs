//! Synthetic ontologies for scale testing.

use super::*;

/// Builds an `n`-component ontology with one above-threshold rule per
/// component (`c{i}.load`), a warning/fault automaton on each, and a
/// `might`-causality chain linking neighbouring components.
pub fn synthetic(n: usize) -> OntologyModel {
    let mut components = Vec::with_capacity(n);
    let mut relations = Vec::with_capacity(n.saturating_sub(1));
    let mut thresholds = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("c{i:04}");
        let metric = format!("{id}.load");
        let ev = |level: &str| Event {
            kind: EventKind::Internal,
            label: format!("{metric}:{level}"),
        };
        components.push(ComponentSpec {
            id: id.clone(),
            sensed: i % 10 != 9,
            states: StateSets {
                sensed: vec!["high_load".into()],
                possible: vec!["degrading".into()],
                normal: vec!["working".into()],
            },
            transitions: vec![
                Transition { from: "working".into(), event: ev("warning"), to: "high_load".into() },
                Transition { from: "working".into(), event: ev("fault"), to: "degrading".into() },
                Transition { from: "high_load".into(), event: ev("fault"), to: "degrading".into() },
                Transition { from: "high_load".into(), event: ev("clear"), to: "working".into() },
                Transition { from: "degrading".into(), event: ev("clear"), to: "working".into() },
            ],
            properties: [Property::Valid, Property::Available].into_iter().collect(),
        });
        thresholds.push(ThresholdRule {
            metric: StateRef::new(&id, "load"),
            units: "%".into(),
            direction: Direction::Above,
            warning: 85.0,
            fault: 95.0,
        });
        if i > 0 {
            relations.push(Relation {
                subject: StateRef::new(format!("c{:04}", i - 1), "degrading"),
                kind: RelationKind::Causality,
                modality: Modality::Might,
                object: StateRef::new(&id, "degrading"),
            });
        }
    }
    OntologyModel {
        version: format!("synthetic-{n}"),
        components,
        relations,
        thresholds,
    }
}
