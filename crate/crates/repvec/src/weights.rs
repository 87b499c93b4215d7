//! Learning the five candidate weights.
//!
//! Every class contributes one training example per embedding dimension:
//! the input is a row of its candidate matrix, the target the matching
//! component of its class-name vector. A single weight vector is learned
//! over the pooled dataset — never per class — by full-batch gradient
//! descent on the mean squared error of the normalized weighted
//! combination ŷ = Σ wⱼxⱼ / Σ wⱼ. Positivity comes from optimizing
//! θ with w = exp(θ), which also keeps the denominator away from zero.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{CandidateMatrix, NUM_CANDIDATES};
use crate::vector::Vector;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("candidate matrix dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight training requires a nonempty dataset")]
    EmptyDataset,
    #[error("training loss became non-finite (learning rate too high?)")]
    NonFiniteLoss,
    #[error("weight sum too close to zero")]
    ZeroWeightSum,
    #[error("weights parse error: {0}")]
    Parse(String),
    #[error("weights file holds nonpositive or nonfinite entries")]
    InvalidWeights,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Pooled training set: one example per (class, dimension index).
#[derive(Debug, Clone, Default)]
pub struct WeightDataset {
    pub inputs: Vec<[f64; NUM_CANDIDATES]>,
    pub targets: Vec<f64>,
    /// (class label, dimension index) per example.
    pub provenance: Vec<(String, usize)>,
}

impl WeightDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Dataset with every example of the named class removed.
    pub fn excluding_class(&self, label: &str) -> WeightDataset {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.provenance[i].0 != label)
            .collect();
        WeightDataset {
            inputs: keep.iter().map(|&i| self.inputs[i]).collect(),
            targets: keep.iter().map(|&i| self.targets[i]).collect(),
            provenance: keep.iter().map(|&i| self.provenance[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub seed: u64,
    pub learning_rate: f64,
}

/// The learned candidate weights, normalized to sum to one.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightVector {
    pub weights: [f64; NUM_CANDIDATES],
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Examples per batch; None runs full-batch.
    pub batch: Option<usize>,
    /// Trains w directly without the positivity reparameterization.
    pub allow_negative: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 500,
            seed: 42,
            batch: None,
            allow_negative: false,
        }
    }
}

/// Pools the per-class candidate matrices and class-name vectors into
/// the universal dataset, in (class order, dimension order).
pub fn build_weight_dataset(
    classes: &[(String, CandidateMatrix, Vector)],
) -> Result<WeightDataset, WeightError> {
    let mut ds = WeightDataset::default();
    let dim = match classes.first() {
        Some((_, m, _)) => m.dimension(),
        None => return Ok(ds),
    };
    for (label, matrix, c0) in classes {
        if matrix.dimension() != dim {
            return Err(WeightError::DimensionMismatch {
                expected: dim,
                got: matrix.dimension(),
            });
        }
        if c0.len() != dim {
            return Err(WeightError::DimensionMismatch {
                expected: dim,
                got: c0.len(),
            });
        }
        for (i, row) in matrix.rows().iter().enumerate() {
            ds.inputs.push(*row);
            ds.targets.push(c0[i]);
            ds.provenance.push((label.clone(), i));
        }
    }
    Ok(ds)
}

/// ŷ = Σ wⱼxⱼ / Σ wⱼ for one candidate row.
pub fn predict_scalar(x: &[f64; NUM_CANDIDATES], w: &[f64; NUM_CANDIDATES]) -> Result<f64, WeightError> {
    let sum: f64 = w.iter().sum();
    if sum.abs() < 1e-12 {
        return Err(WeightError::ZeroWeightSum);
    }
    let acc: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi).sum();
    Ok(acc / sum)
}

/// Applies the combiner to every matrix row, yielding the predicted
/// class vector.
pub fn predict_class_vector(m: &CandidateMatrix, w: &WeightVector) -> Result<Vector, WeightError> {
    m.rows().iter().map(|row| predict_scalar(row, &w.weights)).collect()
}

/// Mean squared error of the combiner and its gradient with respect to
/// the raw parameters θ (w = exp(θ) unless `allow_negative`, in which
/// case w = θ).
pub fn loss_and_gradient(
    ds: &WeightDataset,
    theta: &[f64; NUM_CANDIDATES],
    allow_negative: bool,
) -> Result<(f64, [f64; NUM_CANDIDATES]), WeightError> {
    if ds.is_empty() {
        return Err(WeightError::EmptyDataset);
    }
    let w = apply_param(theta, allow_negative);
    let w_sum: f64 = w.iter().sum();
    if w_sum.abs() < 1e-6 {
        return Err(WeightError::ZeroWeightSum);
    }
    let n = ds.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = [0.0; NUM_CANDIDATES];
    for (x, d) in ds.inputs.iter().zip(ds.targets.iter()) {
        let y_hat: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi).sum::<f64>() / w_sum;
        let err = y_hat - d;
        loss += err * err;
        // ∂ŷ/∂w_k = (x_k − ŷ) / Σw
        for (g, xk) in grad_w.iter_mut().zip(x.iter()) {
            *g += 2.0 * err * (xk - y_hat) / w_sum;
        }
    }
    loss /= n;
    let mut grad = [0.0; NUM_CANDIDATES];
    for k in 0..NUM_CANDIDATES {
        grad_w[k] /= n;
        // Chain rule through the reparameterization.
        grad[k] = if allow_negative { grad_w[k] } else { grad_w[k] * w[k] };
    }
    Ok((loss, grad))
}

fn apply_param(theta: &[f64; NUM_CANDIDATES], allow_negative: bool) -> [f64; NUM_CANDIDATES] {
    if allow_negative {
        *theta
    } else {
        let mut w = [0.0; NUM_CANDIDATES];
        for (wk, t) in w.iter_mut().zip(theta.iter()) {
            *wk = t.exp();
        }
        w
    }
}

/// Gradient descent from the all-ones weight vector. Full-batch by
/// default and therefore deterministic; mini-batches draw a seeded
/// shuffle each epoch.
pub fn train_weights(ds: &WeightDataset, config: &TrainConfig) -> Result<WeightVector, WeightError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if ds.is_empty() {
        return Err(WeightError::EmptyDataset);
    }
    let mut theta = if config.allow_negative {
        [1.0; NUM_CANDIDATES]
    } else {
        [0.0; NUM_CANDIDATES]
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();

    for _ in 0..config.epochs {
        match config.batch {
            None => {
                let (loss, grad) = loss_and_gradient(ds, &theta, config.allow_negative)?;
                if !loss.is_finite() {
                    return Err(WeightError::NonFiniteLoss);
                }
                step(&mut theta, &grad, config)?;
            }
            Some(batch_size) => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(batch_size.max(1)) {
                    let sub = WeightDataset {
                        inputs: chunk.iter().map(|&i| ds.inputs[i]).collect(),
                        targets: chunk.iter().map(|&i| ds.targets[i]).collect(),
                        provenance: Vec::new(),
                    };
                    let (loss, grad) = loss_and_gradient(&sub, &theta, config.allow_negative)?;
                    if !loss.is_finite() {
                        return Err(WeightError::NonFiniteLoss);
                    }
                    step(&mut theta, &grad, config)?;
                }
            }
        }
    }

    let (final_loss, _) = loss_and_gradient(ds, &theta, config.allow_negative)?;
    if !final_loss.is_finite() {
        return Err(WeightError::NonFiniteLoss);
    }
    let weights = normalize(&apply_param(&theta, config.allow_negative))?;
    Ok(WeightVector {
        weights,
        meta: TrainingMeta {
            epochs: config.epochs,
            final_loss,
            seed: config.seed,
            learning_rate: config.learning_rate,
        },
    })
}

fn step(
    theta: &mut [f64; NUM_CANDIDATES],
    grad: &[f64; NUM_CANDIDATES],
    config: &TrainConfig,
) -> Result<(), WeightError> {
    let mut next = *theta;
    for (t, g) in next.iter_mut().zip(grad.iter()) {
        *t -= config.learning_rate * g;
        if !t.is_finite() {
            return Err(WeightError::NonFiniteLoss);
        }
    }
    if config.allow_negative {
        let sum: f64 = next.iter().sum();
        if sum.abs() < 1e-6 {
            // Guard the Eq.-4 denominator; refuse the step rather than
            // cross zero.
            return Ok(());
        }
    }
    *theta = next;
    Ok(())
}

fn normalize(w: &[f64; NUM_CANDIDATES]) -> Result<[f64; NUM_CANDIDATES], WeightError> {
    let sum: f64 = w.iter().sum();
    if sum.abs() < 1e-12 || !sum.is_finite() {
        return Err(WeightError::ZeroWeightSum);
    }
    let mut out = *w;
    for x in &mut out {
        *x /= sum;
    }
    Ok(out)
}

pub fn save_weights<W: Write>(wv: &WeightVector, writer: W) -> Result<(), WeightError> {
    serde_json::to_writer_pretty(writer, wv).map_err(|e| WeightError::Parse(e.to_string()))
}

/// Loads the weights JSON, validating positivity and renormalizing only
/// when the stored sum has drifted more than 1e-9 from one, so that
/// save → load → save is byte-stable.
pub fn load_weights<R: Read>(reader: R) -> Result<WeightVector, WeightError> {
    let mut wv: WeightVector =
        serde_json::from_reader(reader).map_err(|e| WeightError::Parse(e.to_string()))?;
    if wv.weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(WeightError::InvalidWeights);
    }
    let sum: f64 = wv.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        for w in &mut wv.weights {
            *w /= sum;
        }
    }
    Ok(wv)
}
