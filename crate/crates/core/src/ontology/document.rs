use serde::Serialize;

use super::{validate, OntologyError, OntologyModel};

/// Parses and validates an ontology document.
///
/// Unknown keys anywhere in the document are rejected as parse errors. The
/// first invariant violation found is reported as a validation error.
pub fn parse_ontology(doc: &[u8]) -> Result<OntologyModel, OntologyError> {
    let model = force_load(doc)?;
    if let Some(v) = validate(&model).into_iter().next() {
        return Err(OntologyError::Validation {
            rule: v.rule,
            detail: v.detail,
        });
    }
    Ok(model)
}

/// Parses a document without checking model invariants.
pub fn force_load(doc: &[u8]) -> Result<OntologyModel, OntologyError> {
    serde_json::from_slice(doc).map_err(|e| OntologyError::Parse {
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Canonical document bytes: compact JSON with sorted keys.
pub fn serialize_ontology(model: &OntologyModel) -> Vec<u8> {
    let value = serde_json::to_value(model).expect("ontology serializes");
    serde_json::to_vec(&value).expect("json value serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SizeMetrics {
    pub component_count: usize,
    pub relation_count: usize,
    pub serialized_bytes: usize,
}

pub fn size_metrics(model: &OntologyModel) -> SizeMetrics {
    SizeMetrics {
        component_count: model.components.len(),
        relation_count: model.relations.len(),
        serialized_bytes: serialize_ontology(model).len(),
    }
}
