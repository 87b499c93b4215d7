//! Scoring and reporting.
//!
//! Each class's representative vectors are scored by Euclidean distance
//! to the class-name vector C0: the instance mean (C2), the class median
//! (C3), and the learned combination Y. Two protocols are offered: the
//! in-sample protocol trains the weights on all classes and scores the
//! same classes; leave-one-class-out retrains without the scored class,
//! giving an honest generalization figure. A seeded synthetic generator
//! stands in for a corpus-scale embedding model at desk scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::ontology::OntologyClass;
use crate::pipeline::{process_classes, weight_inputs, ClassArtifacts, PipelineConfig, PipelineError};
use crate::vector::{distance, Vector};
use crate::weights::{
    build_weight_dataset, predict_class_vector, train_weights, WeightError, WeightVector,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("leave-one-class-out needs at least 2 classes, got {0}")]
    InsufficientClasses(usize),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("report parse error: {0}")]
    ReportParse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Insample,
    Loco,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Insample => write!(f, "insample"),
            Protocol::Loco => write!(f, "loco"),
        }
    }
}

/// One Table-style row: distances from C0 for the three representatives.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassResult {
    pub label: String,
    pub dist_mean: f64,
    pub dist_median: f64,
    pub dist_model: f64,
    pub n_instances: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanRow {
    pub dist_mean: f64,
    pub dist_median: f64,
    pub dist_model: f64,
    pub n_instances: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config: PipelineConfig,
    pub config_fingerprint: u64,
    pub dropped_instances: BTreeMap<String, Vec<String>>,
    /// Weights used per class (identical across classes under insample).
    pub weights: BTreeMap<String, WeightVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: Protocol,
    pub rows: Vec<ClassResult>,
    pub mean_row: MeanRow,
    pub run_meta: RunMeta,
}

/// ‖a − b‖₂ with an explicit dimension check.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(distance(a, b))
}

/// Scores every class under the chosen protocol.
pub fn evaluate(
    classes: &[OntologyClass],
    table: &EmbeddingTable,
    config: &PipelineConfig,
    protocol: Protocol,
) -> Result<EvaluationReport, EvalError> {
    let artifacts = process_classes(classes, table, config)?;
    evaluate_artifacts(&artifacts, config, protocol)
}

/// Same as [`evaluate`], starting from precomputed per-class artifacts.
pub fn evaluate_artifacts(
    artifacts: &[ClassArtifacts],
    config: &PipelineConfig,
    protocol: Protocol,
) -> Result<EvaluationReport, EvalError> {
    if protocol == Protocol::Loco && artifacts.len() < 2 {
        return Err(EvalError::InsufficientClasses(artifacts.len()));
    }
    let dataset = build_weight_dataset(&weight_inputs(artifacts))?;
    let train_config = config.train_config();

    let mut class_weights: Vec<(String, WeightVector)> = Vec::with_capacity(artifacts.len());
    match protocol {
        Protocol::Insample => {
            let weights = train_weights(&dataset, &train_config)?;
            for artifact in artifacts {
                class_weights.push((artifact.label.clone(), weights.clone()));
            }
        }
        Protocol::Loco => {
            for artifact in artifacts {
                let held_out = dataset.excluding_class(&artifact.label);
                let weights = train_weights(&held_out, &train_config)?;
                class_weights.push((artifact.label.clone(), weights));
            }
        }
    }

    let mut rows = Vec::with_capacity(artifacts.len());
    for (artifact, (_, weights)) in artifacts.iter().zip(class_weights.iter()) {
        let predicted = predict_class_vector(&artifact.matrix, weights)?;
        rows.push(ClassResult {
            label: artifact.label.clone(),
            dist_mean: euclidean_distance(&artifact.candidates.c2, &artifact.c0)?,
            dist_median: euclidean_distance(&artifact.candidates.c3, &artifact.c0)?,
            dist_model: euclidean_distance(&predicted, &artifact.c0)?,
            n_instances: artifact.n_instances,
            degenerate: artifact.clustering.degenerate,
        });
    }

    let n = rows.len() as f64;
    let mean_row = MeanRow {
        dist_mean: rows.iter().map(|r| r.dist_mean).sum::<f64>() / n,
        dist_median: rows.iter().map(|r| r.dist_median).sum::<f64>() / n,
        dist_model: rows.iter().map(|r| r.dist_model).sum::<f64>() / n,
        n_instances: rows.iter().map(|r| r.n_instances as f64).sum::<f64>() / n,
    };

    let dropped: BTreeMap<String, Vec<String>> = artifacts
        .iter()
        .filter(|a| !a.dropped_instances.is_empty())
        .map(|a| (a.label.clone(), a.dropped_instances.clone()))
        .collect();
    let config_json = serde_json::to_string(config).expect("config serializes");
    let run_meta = RunMeta {
        seed: config.seed,
        config: *config,
        config_fingerprint: fnv1a(config_json.as_bytes()),
        dropped_instances: dropped,
        weights: class_weights.into_iter().collect(),
    };

    Ok(EvaluationReport {
        protocol,
        rows,
        mean_row,
        run_meta,
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Renders the report as TSV: a header, one row per class with
/// distances at 4 decimal places, and a final MEAN row.
pub fn render_report_tsv(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("class\tdist_mean\tdist_median\tdist_model\tn_instances\n");
    for row in &report.rows {
        writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            row.label, row.dist_mean, row.dist_median, row.dist_model, row.n_instances
        )
        .unwrap();
    }
    writeln!(
        out,
        "MEAN\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
        report.mean_row.dist_mean,
        report.mean_row.dist_median,
        report.mean_row.dist_model,
        report.mean_row.n_instances
    )
    .unwrap();
    out
}

/// Parsed form of the TSV: per-class rows plus the MEAN row.
pub fn parse_report_tsv(text: &str) -> Result<(Vec<ClassResult>, MeanRow), EvalError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| EvalError::ReportParse("empty report".into()))?;
    if header != "class\tdist_mean\tdist_median\tdist_model\tn_instances" {
        return Err(EvalError::ReportParse(format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    let mut mean_row = None;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(EvalError::ReportParse(format!("bad row {:?}", line)));
        }
        let parse = |s: &str| -> Result<f64, EvalError> {
            s.parse().map_err(|_| EvalError::ReportParse(format!("bad number {:?}", s)))
        };
        if fields[0] == "MEAN" {
            mean_row = Some(MeanRow {
                dist_mean: parse(fields[1])?,
                dist_median: parse(fields[2])?,
                dist_model: parse(fields[3])?,
                n_instances: parse(fields[4])?,
            });
        } else {
            rows.push(ClassResult {
                label: fields[0].to_string(),
                dist_mean: parse(fields[1])?,
                dist_median: parse(fields[2])?,
                dist_model: parse(fields[3])?,
                n_instances: fields[4]
                    .parse()
                    .map_err(|_| EvalError::ReportParse(format!("bad count {:?}", fields[4])))?,
                degenerate: false,
            });
        }
    }
    let mean_row = mean_row.ok_or_else(|| EvalError::ReportParse("missing MEAN row".into()))?;
    Ok((rows, mean_row))
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub instances_per_class: usize,
    pub dim: usize,
    /// Distance between the two planted mode centers of each class.
    pub schism: f64,
    /// Expected displacement of the class-label vector from the
    /// ground-truth center (total over all coordinates, matching the
    /// unit-total-variance convention of the instance modes).
    pub label_noise: f64,
    pub seed: u64,
}

/// Ground truth of a synthetic run: the center every class was drawn
/// around, keyed by class label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub dim: usize,
    pub centers: BTreeMap<String, Vector>,
}

/// Generates a synthetic embedding table and ontology.
///
/// Each class draws a ground-truth center `g`; instances sample from a
/// two-mode Gaussian mixture at `g ± (schism/2)·u` for a random unit
/// direction `u`, with unit total variance per mode. The class-label
/// token embeds at `g` plus per-coordinate noise of `label_noise`.
/// Everything is a pure function of the seed.
pub fn generate_synthetic(
    config: &SyntheticConfig,
) -> (EmbeddingTable, Vec<OntologyClass>, GroundTruth) {
    assert!(config.n_classes >= 1, "need at least one class");
    assert!(config.instances_per_class >= 1, "need at least one instance per class");
    assert!(config.dim >= 1, "need at least one dimension");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let mode_sigma = (1.0 / dim as f64).sqrt();
    let mut entries: Vec<(String, Vector)> = Vec::new();
    let mut classes = Vec::with_capacity(config.n_classes);
    let mut centers = BTreeMap::new();

    for class_idx in 0..config.n_classes {
        let label = format!("class{}", class_idx);
        let center: Vector = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let mut direction: Vector = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let len = crate::vector::norm(&direction).max(1e-12);
        for x in &mut direction {
            *x /= len;
        }
        let label_vec: Vector = center
            .iter()
            .map(|&g| g + config.label_noise * gaussian(&mut rng))
            .collect();
        entries.push((label.clone(), label_vec));

        let mut instances = Vec::with_capacity(config.instances_per_class);
        for inst_idx in 0..config.instances_per_class {
            let token = format!("{}_inst{:02}", label, inst_idx);
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let vector: Vector = center
                .iter()
                .zip(direction.iter())
                .map(|(&g, &u)| g + side * (config.schism / 2.0) * u + mode_sigma * gaussian(&mut rng))
                .collect();
            entries.push((token.clone(), vector));
            instances.push(token);
        }
        classes.push(OntologyClass { label: label.clone(), instances });
        centers.insert(label, center);
    }

    let table = EmbeddingTable::from_entries(dim, entries).expect("generator emits valid entries");
    (table, classes, GroundTruth { dim, centers })
}

/// Standard normal via Box–Muller; two uniform draws per sample keeps
/// the stream position independent of call history.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
