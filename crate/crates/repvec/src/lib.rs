//! Representative vectors for ontology classes.
//!
//! Given a word-embedding table and an ontology (classes with instance
//! terms), this crate derives one representative vector per class. For
//! each class it splits the instance vectors into two sub-clusters,
//! locates the support vectors along the split with a linear SVM, builds
//! five candidate vectors (average support vector, instance mean, class
//! median, and the two sub-cluster means), and combines them with a
//! single weight vector learned across all classes. An evaluation
//! harness scores the combined vector against the class-name embedding
//! and compares it with the plain mean and median baselines.

pub mod candidates;
pub mod cli;
pub mod embeddings;
pub mod evaluation;
pub mod ontology;
pub mod pipeline;
pub mod subclustering;
pub mod svm;
pub mod vector;
pub mod weights;

pub use embeddings::EmbeddingTable;
pub use ontology::{OntologyClass, ResolvedClass};
pub use vector::Vector;
