//! Two-way k-means over a class's instance vectors.
//!
//! Every class is split into exactly two sub-clusters: the premise is
//! that even a coherent instance set has one main internal schism, and
//! the two sub-cluster means become candidate vectors downstream. Lloyd
//! iterations run from k-means++ seeds, keeping the best objective over
//! a number of restarts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::vector::{squared_distance, Vector};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty vector set")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy)]
pub struct KmeansConfig {
    pub max_iters: usize,
    /// Minimum objective improvement to keep iterating.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            max_iters: 100,
            tol: 1e-9,
            seed: 0,
            restarts: 16,
        }
    }
}

/// A 2-way partition with per-cluster means and the within-cluster sum
/// of squared distances. `degenerate` marks singleton or all-identical
/// inputs, where both means equal the overall mean and no real split
/// exists.
#[derive(Debug, Clone)]
pub struct SubClustering {
    /// Per-instance cluster id in {0, 1}, in input order.
    pub assignment: Vec<u8>,
    pub mean0: Vector,
    pub mean1: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub degenerate: bool,
}

impl SubClustering {
    pub fn cluster_sizes(&self) -> (usize, usize) {
        let ones = self.assignment.iter().filter(|&&a| a == 1).count();
        (self.assignment.len() - ones, ones)
    }
}

/// Splits `vectors` into two clusters, returning the best result over
/// `config.restarts` k-means++ starts. Equidistant points go to cluster
/// 0; a cluster that empties during Lloyd iteration is refilled with the
/// point farthest from the surviving mean.
pub fn kmeans2(vectors: &[Vector], config: &KmeansConfig) -> Result<SubClustering, ClusterError> {
    if vectors.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let n = vectors.len();
    if n == 1 || all_identical(vectors) {
        let mean = crate::vector::mean(vectors);
        let objective = partition_sse(vectors, &vec![0; n], &mean, &mean);
        return Ok(SubClustering {
            assignment: vec![0; n],
            mean0: mean.clone(),
            mean1: mean,
            objective,
            iterations: 0,
            degenerate: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let restarts = config.restarts.max(1);
    let mut best: Option<SubClustering> = None;
    for _ in 0..restarts {
        let run = lloyd_run(vectors, config, &mut rng);
        if best.as_ref().map_or(true, |b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn all_identical(vectors: &[Vector]) -> bool {
    vectors.windows(2).all(|w| w[0] == w[1])
}

/// k-means++ seeding: first center uniform over the points, second drawn
/// proportional to squared distance from the first.
fn seed_centers(vectors: &[Vector], rng: &mut ChaCha8Rng) -> (Vector, Vector) {
    let n = vectors.len();
    let first = rng.gen_range(0..n);
    let weights: Vec<f64> = vectors
        .iter()
        .map(|v| squared_distance(v, &vectors[first]))
        .collect();
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "identical inputs reach the degenerate path");
    let mut draw = rng.gen::<f64>() * total;
    let mut second = n - 1;
    for (i, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 && *w > 0.0 {
            second = i;
            break;
        }
    }
    (vectors[first].clone(), vectors[second].clone())
}

fn lloyd_run(vectors: &[Vector], config: &KmeansConfig, rng: &mut ChaCha8Rng) -> SubClustering {
    let n = vectors.len();
    let (mut mean0, mut mean1) = seed_centers(vectors, rng);
    let mut assignment = vec![0u8; n];
    let mut prev_objective = f64::INFINITY;
    let mut iterations = 0usize;

    for _ in 0..config.max_iters.max(1) {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let d0 = squared_distance(v, &mean0);
            let d1 = squared_distance(v, &mean1);
            let a = if d1 < d0 { 1 } else { 0 };
            if assignment[i] != a {
                assignment[i] = a;
                changed = true;
            }
        }
        changed |= refill_if_empty(vectors, &mut assignment, &mean0, &mean1);
        mean0 = cluster_mean(vectors, &assignment, 0);
        mean1 = cluster_mean(vectors, &assignment, 1);
        let objective = partition_sse(vectors, &assignment, &mean0, &mean1);
        debug_assert!(
            prev_objective.is_infinite() || objective <= prev_objective + 1e-9 * (1.0 + prev_objective),
            "Lloyd objective increased: {} -> {}",
            prev_objective,
            objective
        );
        iterations += 1;
        let improved = prev_objective - objective;
        prev_objective = objective;
        if !changed || improved <= config.tol {
            break;
        }
    }

    SubClustering {
        assignment,
        mean0,
        mean1,
        objective: prev_objective,
        iterations,
        degenerate: false,
    }
}

fn refill_if_empty(
    vectors: &[Vector],
    assignment: &mut [u8],
    mean0: &Vector,
    mean1: &Vector,
) -> bool {
    let ones = assignment.iter().filter(|&&a| a == 1).count();
    let (empty, survivor_mean) = if ones == 0 {
        (1u8, mean0)
    } else if ones == assignment.len() {
        (0u8, mean1)
    } else {
        return false;
    };
    let farthest = vectors
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            squared_distance(a, survivor_mean)
                .partial_cmp(&squared_distance(b, survivor_mean))
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    assignment[farthest] = empty;
    true
}

fn cluster_mean(vectors: &[Vector], assignment: &[u8], cluster: u8) -> Vector {
    let dim = vectors[0].len();
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for (v, &a) in vectors.iter().zip(assignment.iter()) {
        if a == cluster {
            for (s, x) in acc.iter_mut().zip(v.iter()) {
                *s += x;
            }
            count += 1;
        }
    }
    debug_assert!(count > 0, "cluster {} emptied without refill", cluster);
    for s in &mut acc {
        *s /= count as f64;
    }
    acc
}

/// Within-cluster sum of squared distances, accumulated in input order.
pub fn partition_sse(vectors: &[Vector], assignment: &[u8], mean0: &Vector, mean1: &Vector) -> f64 {
    let mut sse = 0.0;
    for (v, &a) in vectors.iter().zip(assignment.iter()) {
        let mean = if a == 0 { mean0 } else { mean1 };
        sse += squared_distance(v, mean);
    }
    sse
}
