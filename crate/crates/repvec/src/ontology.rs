//! Ontology ingestion and class resolution.
//!
//! The interchange format is a JSON document
//! `{"classes":[{"label": string, "instances":[string, ...]}, ...]}`.
//! Class hierarchies play no role here; a class is just a label plus its
//! instance terms. Resolution turns both into embedding-space vectors.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::vector::Vector;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("ontology parse error: {0}")]
    Parse(String),
    #[error("duplicate class label {0:?}")]
    DuplicateClassLabel(String),
    #[error("class {0:?} has no instances")]
    EmptyClass(String),
    #[error("class {0:?} has an empty label or instance string")]
    EmptyString(String),
    #[error("class label {0:?} resolves to no embedding vector")]
    LabelUnresolvable(String),
    #[error("no instance of class {0:?} resolves to an embedding vector")]
    ClassUnresolvable(String),
}

/// A named class and its instance terms, as ingested.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct OntologyClass {
    pub label: String,
    pub instances: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OntologyDoc {
    classes: Vec<OntologyClass>,
}

/// A class whose label and instances were mapped into embedding space.
/// `c0` is the class-name vector every representative is scored against.
#[derive(Debug, Clone)]
pub struct ResolvedClass {
    pub label: String,
    pub c0: Vector,
    pub instance_vectors: Vec<Vector>,
    pub dropped_instances: Vec<String>,
}

/// Parses the ontology JSON, deduplicating instances within each class
/// case-insensitively (first occurrence wins) and preserving file order.
pub fn load_ontology<R: Read>(reader: R) -> Result<Vec<OntologyClass>, OntologyError> {
    let doc: OntologyDoc =
        serde_json::from_reader(reader).map_err(|e| OntologyError::Parse(e.to_string()))?;
    let mut seen_labels = std::collections::HashSet::new();
    let mut classes = Vec::with_capacity(doc.classes.len());
    for mut cls in doc.classes {
        if cls.label.trim().is_empty() {
            return Err(OntologyError::EmptyString(cls.label));
        }
        if !seen_labels.insert(cls.label.clone()) {
            return Err(OntologyError::DuplicateClassLabel(cls.label));
        }
        if cls.instances.iter().any(|s| s.trim().is_empty()) {
            return Err(OntologyError::EmptyString(cls.label));
        }
        let mut seen = std::collections::HashSet::new();
        cls.instances.retain(|s| seen.insert(s.to_lowercase()));
        if cls.instances.is_empty() {
            return Err(OntologyError::EmptyClass(cls.label));
        }
        classes.push(cls);
    }
    Ok(classes)
}

/// Serializes classes back to the interchange JSON schema.
pub fn save_ontology<W: std::io::Write>(
    classes: &[OntologyClass],
    writer: W,
) -> std::io::Result<()> {
    let doc = OntologyDoc {
        classes: classes.to_vec(),
    };
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}

/// Resolves a class against the table: `c0` from the label, one vector
/// per instance in order. Instances with no resolvable token are moved
/// to `dropped_instances`; a class where everything drops is an error.
pub fn resolve_class(
    cls: &OntologyClass,
    table: &EmbeddingTable,
) -> Result<ResolvedClass, OntologyError> {
    let c0 = table
        .embed_phrase(&cls.label)
        .map_err(|_| OntologyError::LabelUnresolvable(cls.label.clone()))?;
    let mut instance_vectors = Vec::with_capacity(cls.instances.len());
    let mut dropped_instances = Vec::new();
    for instance in &cls.instances {
        match table.embed_phrase(instance) {
            Ok(v) => instance_vectors.push(v),
            Err(_) => dropped_instances.push(instance.clone()),
        }
    }
    if instance_vectors.is_empty() {
        return Err(OntologyError::ClassUnresolvable(cls.label.clone()));
    }
    if !dropped_instances.is_empty() {
        log::warn!(
            "class {:?}: dropped {} unresolvable instance(s)",
            cls.label,
            dropped_instances.len()
        );
    }
    Ok(ResolvedClass {
        label: cls.label.clone(),
        c0,
        instance_vectors,
        dropped_instances,
    })
}
