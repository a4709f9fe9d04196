use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Diagnosis, ReasonerError};
use crate::ontology::{Modality, OntologyModel, Relation, RelationKind, StateRef};

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseLink {
    pub subject: StateRef,
    pub kind: RelationKind,
    pub modality: Modality,
    pub object: StateRef,
}

/// Ordered links from an active antecedent to the diagnosed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseChain {
    pub links: Vec<CauseLink>,
    pub aggregate_certainty: f64,
}

impl CauseChain {
    pub fn empty() -> Self {
        Self {
            links: Vec::new(),
            aggregate_certainty: 1.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Node sequence from root to the diagnosed state.
    pub fn nodes(&self) -> Vec<&StateRef> {
        let mut out: Vec<&StateRef> = self.links.iter().map(|l| &l.subject).collect();
        if let Some(last) = self.links.last() {
            out.push(&last.object);
        }
        out
    }
}

/// Most certain acyclic causal chain ending at the diagnosed state.
///
/// Chains follow `causality` and `implication` relations backward from the
/// diagnosis until an active abnormal state is reached. Any node that is the
/// object of a `prevention` relation with an active subject blocks the chain.
/// Ties on certainty go to the shorter chain, then to the lexicographically
/// smaller node sequence.
pub fn root_cause(
    d: &Diagnosis,
    model: &OntologyModel,
    active: &BTreeSet<StateRef>,
) -> Result<CauseChain, ReasonerError> {
    if model.component(&d.component).is_none() {
        return Err(ReasonerError::UnknownComponent(d.component.clone()));
    }
    let target = d.state_ref();

    let blocked: HashSet<&StateRef> = model
        .relations
        .iter()
        .filter(|r| r.kind == RelationKind::Prevention && active.contains(&r.subject))
        .map(|r| &r.object)
        .collect();
    if blocked.contains(&target) {
        return Ok(CauseChain::empty());
    }

    let mut incoming: HashMap<&StateRef, Vec<&Relation>> = HashMap::new();
    for r in model.relations.iter().filter(|r| r.kind.propagates()) {
        incoming.entry(&r.object).or_default().push(r);
    }

    let mut search = Search {
        incoming: &incoming,
        blocked: &blocked,
        active,
        best: None,
        path: Vec::new(),
        on_path: HashSet::from([&target]),
    };
    search.extend(&target, 1.0);

    Ok(match search.best {
        None => CauseChain::empty(),
        Some((certainty, mut rels)) => {
            rels.reverse();
            CauseChain {
                links: rels
                    .into_iter()
                    .map(|r| CauseLink {
                        subject: r.subject.clone(),
                        kind: r.kind,
                        modality: r.modality,
                        object: r.object.clone(),
                    })
                    .collect(),
                aggregate_certainty: certainty,
            }
        }
    })
}

struct Search<'a> {
    incoming: &'a HashMap<&'a StateRef, Vec<&'a Relation>>,
    blocked: &'a HashSet<&'a StateRef>,
    active: &'a BTreeSet<StateRef>,
    // certainty and links ordered from the target backward
    best: Option<(f64, Vec<&'a Relation>)>,
    path: Vec<&'a Relation>,
    on_path: HashSet<&'a StateRef>,
}

impl<'a> Search<'a> {
    fn extend(&mut self, node: &'a StateRef, certainty: f64) {
        let Some(edges) = self.incoming.get(node) else {
            return;
        };
        for &r in edges {
            let src = &r.subject;
            if self.on_path.contains(src) || self.blocked.contains(src) {
                continue;
            }
            let c = certainty * r.modality.certainty();
            if let Some((best, _)) = &self.best {
                // extending never raises certainty
                if c < best - TIE_EPS {
                    continue;
                }
            }
            self.path.push(r);
            self.on_path.insert(src);
            if self.active.contains(src) {
                self.offer(c);
            } else {
                self.extend(src, c);
            }
            self.on_path.remove(src);
            self.path.pop();
        }
    }

    fn offer(&mut self, certainty: f64) {
        let better = match &self.best {
            None => true,
            Some((bc, bp)) => {
                if certainty > bc + TIE_EPS {
                    true
                } else if certainty < bc - TIE_EPS {
                    false
                } else if self.path.len() != bp.len() {
                    self.path.len() < bp.len()
                } else {
                    forward_nodes(&self.path) < forward_nodes(bp)
                }
            }
        };
        if better {
            self.best = Some((certainty, self.path.clone()));
        }
    }
}

fn forward_nodes<'a>(backward: &[&'a Relation]) -> Vec<&'a StateRef> {
    let mut out: Vec<&StateRef> = backward.iter().rev().map(|r| &r.subject).collect();
    if let Some(first) = backward.first() {
        out.push(&first.object);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::*;
    use crate::reasoner::Severity;

    fn component(id: &str, states: &[&str]) -> ComponentSpec {
        ComponentSpec {
            id: id.into(),
            sensed: true,
            states: StateSets {
                sensed: vec![],
                possible: states.iter().map(|s| s.to_string()).collect(),
                normal: vec!["ok".into()],
            },
            transitions: vec![],
            properties: Default::default(),
        }
    }

    fn rel(s: &str, kind: RelationKind, m: Modality, o: &str) -> Relation {
        Relation {
            subject: s.parse().unwrap(),
            kind,
            modality: m,
            object: o.parse().unwrap(),
        }
    }

    fn diag(component: &str, state: &str) -> Diagnosis {
        Diagnosis {
            t_ms: 0,
            component: component.into(),
            severity: Severity::Fault,
            state: state.into(),
            certainty: 1.0,
            rule_id: "r".into(),
            message: String::new(),
            value: None,
            repeat: false,
        }
    }

    fn chain_model() -> OntologyModel {
        OntologyModel {
            components: vec![
                component("battery", &["soc_low"]),
                component("driver", &["undervoltage"]),
                component("motor", &["stall"]),
            ],
            relations: vec![
                rel("battery.soc_low", RelationKind::Causality, Modality::Might, "driver.undervoltage"),
                rel("driver.undervoltage", RelationKind::Causality, Modality::Must, "motor.stall"),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn no_relations_gives_empty_chain() {
        let m = OntologyModel {
            components: vec![component("motor", &["stall"])],
            ..Default::default()
        };
        let c = root_cause(&diag("motor", "stall"), &m, &BTreeSet::new()).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.aggregate_certainty, 1.0);
    }

    #[test]
    fn two_link_chain() {
        let active = BTreeSet::from([StateRef::new("battery", "soc_low")]);
        let c = root_cause(&diag("motor", "stall"), &chain_model(), &active).unwrap();
        assert_eq!(c.links.len(), 2);
        assert_eq!(c.aggregate_certainty, 0.5);
        assert_eq!(c.links[0].subject, StateRef::new("battery", "soc_low"));
        assert_eq!(c.links[1].object, StateRef::new("motor", "stall"));
    }

    #[test]
    fn inactive_antecedent_gives_empty_chain() {
        let c = root_cause(&diag("motor", "stall"), &chain_model(), &BTreeSet::new()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn prevention_with_active_subject_blocks() {
        let mut m = chain_model();
        m.components.push(component("fuse", &["tripped"]));
        m.relations.push(rel(
            "fuse.tripped",
            RelationKind::Prevention,
            Modality::Must,
            "driver.undervoltage",
        ));
        let mut active = BTreeSet::from([StateRef::new("battery", "soc_low")]);
        let c = root_cause(&diag("motor", "stall"), &m, &active).unwrap();
        assert_eq!(c.links.len(), 2, "inactive preventer has no effect");
        active.insert(StateRef::new("fuse", "tripped"));
        let c = root_cause(&diag("motor", "stall"), &m, &active).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn implication_propagates_but_hierarchy_does_not() {
        let mut m = chain_model();
        m.relations[0].kind = RelationKind::Implication;
        let active = BTreeSet::from([StateRef::new("battery", "soc_low")]);
        assert_eq!(root_cause(&diag("motor", "stall"), &m, &active).unwrap().links.len(), 2);
        m.relations[0].kind = RelationKind::Composition;
        assert!(root_cause(&diag("motor", "stall"), &m, &active).unwrap().is_empty());
    }

    #[test]
    fn unknown_component() {
        assert_eq!(
            root_cause(&diag("gps", "lost"), &chain_model(), &BTreeSet::new()),
            Err(ReasonerError::UnknownComponent("gps".into()))
        );
    }

    #[test]
    fn tie_prefers_shorter_then_lexicographic() {
        let m = OntologyModel {
            components: vec![
                component("a", &["x"]),
                component("b", &["x"]),
                component("c", &["x"]),
                component("t", &["x"]),
            ],
            relations: vec![
                rel("b.x", RelationKind::Causality, Modality::Must, "t.x"),
                rel("a.x", RelationKind::Causality, Modality::Must, "t.x"),
                rel("c.x", RelationKind::Causality, Modality::Must, "a.x"),
            ],
            ..Default::default()
        };
        let active: BTreeSet<StateRef> =
            ["a.x", "b.x", "c.x"].iter().map(|s| s.parse().unwrap()).collect();
        let c = root_cause(&diag("t", "x"), &m, &active).unwrap();
        assert_eq!(c.links.len(), 1);
        assert_eq!(c.links[0].subject, StateRef::new("a", "x"));
    }
}
