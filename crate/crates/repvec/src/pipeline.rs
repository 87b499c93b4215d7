//! Per-class pipeline: sub-clustering, support vectors, candidates.
//!
//! Classes are independent, so the per-class stage fans out over a
//! rayon pool; results are collected in class order, which keeps every
//! downstream artifact deterministic regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{assemble_matrix, build_candidates, CandidateError, CandidateMatrix, CandidateSet};
use crate::embeddings::EmbeddingTable;
use crate::ontology::{resolve_class, OntologyClass, OntologyError, ResolvedClass};
use crate::subclustering::{kmeans2, ClusterError, KmeansConfig, SubClustering};
use crate::svm::{train_linear_svm, SvmConfig, SvmError, SvmModel};
use crate::vector::Vector;
use crate::weights::TrainConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("class {class:?} ({module}): {message}")]
    Class {
        class: String,
        module: &'static str,
        message: String,
    },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

impl PipelineError {
    fn class(class: &str, module: &'static str, err: impl std::fmt::Display) -> Self {
        PipelineError::Class {
            class: class.to_string(),
            module,
            message: err.to_string(),
        }
    }
}

/// Knobs for every stage, all seeded from one master seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub svm_c: f64,
    pub svm_kkt_tol: f64,
    pub svm_support_eps: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub allow_negative: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            kmeans_restarts: 16,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-9,
            svm_c: 1.0,
            svm_kkt_tol: 1e-3,
            svm_support_eps: 1e-8,
            learning_rate: 0.05,
            epochs: 500,
            allow_negative: false,
        }
    }
}

impl PipelineConfig {
    // Every class gets the same per-stage seed: identical classes must
    // produce identical artifacts within one run, and each stage starts
    // its own stream from the seed anyway.
    pub fn kmeans_config(&self) -> KmeansConfig {
        KmeansConfig {
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            seed: self.seed,
            restarts: self.kmeans_restarts,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm_c,
            kkt_tol: self.svm_kkt_tol,
            support_eps: self.svm_support_eps,
            max_passes: 0,
            seed: self.seed.wrapping_add(1),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            batch: None,
            allow_negative: self.allow_negative,
        }
    }
}

/// Everything the weight stage and the reports need from one class.
#[derive(Debug, Clone)]
pub struct ClassArtifacts {
    pub label: String,
    pub c0: Vector,
    pub n_instances: usize,
    pub dropped_instances: Vec<String>,
    pub clustering: SubClustering,
    pub candidates: CandidateSet,
    pub matrix: CandidateMatrix,
}

/// Splits vectors into (cluster 0, cluster 1) lists, preserving relative
/// order — the exact ordering the SVM is trained on.
pub fn split_clusters(vectors: &[Vector], assignment: &[u8]) -> (Vec<Vector>, Vec<Vector>) {
    let mut cluster0 = Vec::new();
    let mut cluster1 = Vec::new();
    for (v, &a) in vectors.iter().zip(assignment.iter()) {
        if a == 0 {
            cluster0.push(v.clone());
        } else {
            cluster1.push(v.clone());
        }
    }
    (cluster0, cluster1)
}

/// Runs sub-clustering, the SVM, and candidate assembly for one
/// already-resolved class.
pub fn process_resolved(
    resolved: ResolvedClass,
    config: &PipelineConfig,
) -> Result<ClassArtifacts, PipelineError> {
    let label = resolved.label.clone();
    let clustering = kmeans2(&resolved.instance_vectors, &config.kmeans_config())
        .map_err(|e: ClusterError| PipelineError::class(&label, "subclustering", e))?;

    let model: Option<SvmModel> = if clustering.degenerate {
        None
    } else {
        let (pos, neg) = split_clusters(&resolved.instance_vectors, &clustering.assignment);
        Some(
            train_linear_svm(&pos, &neg, &config.svm_config())
                .map_err(|e: SvmError| PipelineError::class(&label, "svm", e))?,
        )
    };

    let candidates = build_candidates(&resolved, &clustering, model.as_ref())
        .map_err(|e: CandidateError| PipelineError::class(&label, "candidates", e))?;
    let dim = resolved.c0.len();
    let matrix = assemble_matrix(&candidates, dim)
        .map_err(|e| PipelineError::class(&label, "candidates", e))?;

    Ok(ClassArtifacts {
        label,
        c0: resolved.c0,
        n_instances: resolved.instance_vectors.len(),
        dropped_instances: resolved.dropped_instances,
        clustering,
        candidates,
        matrix,
    })
}

/// Resolves and processes every class against the shared table, in
/// parallel, returning artifacts in ontology order.
pub fn process_classes(
    classes: &[OntologyClass],
    table: &EmbeddingTable,
    config: &PipelineConfig,
) -> Result<Vec<ClassArtifacts>, PipelineError> {
    classes
        .par_iter()
        .map(|cls| {
            let resolved = resolve_class(cls, table)
                .map_err(|e| PipelineError::class(&cls.label, "ontology", e))?;
            process_resolved(resolved, config)
        })
        .collect()
}

/// (label, matrix, c0) triples in the shape the weight stage consumes.
pub fn weight_inputs(artifacts: &[ClassArtifacts]) -> Vec<(String, CandidateMatrix, Vector)> {
    artifacts
        .iter()
        .map(|a| (a.label.clone(), a.matrix.clone(), a.c0.clone()))
        .collect()
}
