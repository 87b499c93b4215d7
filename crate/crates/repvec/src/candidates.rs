//! Candidate vectors C1–C5 and the per-class candidate matrix.
//!
//! C1 averages the support vectors marking the schism, C2 is the plain
//! instance mean, C3 the instance closest to that mean, and C4/C5 the
//! two sub-cluster means. The matrix lays the five candidates out as
//! columns so that row `i` pairs with component `i` of the class-name
//! vector in the weight-training dataset.

use thiserror::Error;

use crate::ontology::ResolvedClass;
use crate::subclustering::SubClustering;
use crate::svm::{support_membership, SvmModel};
use crate::vector::{squared_distance, Vector};

pub const NUM_CANDIDATES: usize = 5;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("membership selects no vectors")]
    AllZeroMembership,
    #[error("cannot take the median of an empty vector set")]
    EmptyInput,
    #[error("candidate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-degenerate clustering requires a trained SVM model")]
    MissingModel,
}

/// The five candidate vectors of one class.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// Average support vector.
    pub c1: Vector,
    /// Average instance vector.
    pub c2: Vector,
    /// Class median vector (an actual instance vector).
    pub c3: Vector,
    /// Sub-cluster 0 mean.
    pub c4: Vector,
    /// Sub-cluster 1 mean.
    pub c5: Vector,
}

impl CandidateSet {
    pub fn as_array(&self) -> [&Vector; NUM_CANDIDATES] {
        [&self.c1, &self.c2, &self.c3, &self.c4, &self.c5]
    }
}

/// N×5 matrix; column `j` is candidate `C_{j+1}`, row `i` is the five
/// candidates' `i`th components.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatrix {
    rows: Vec<[f64; NUM_CANDIDATES]>,
}

impl CandidateMatrix {
    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[[f64; NUM_CANDIDATES]] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64; NUM_CANDIDATES] {
        &self.rows[i]
    }

    pub fn column(&self, j: usize) -> Vector {
        assert!(j < NUM_CANDIDATES);
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Membership-weighted mean of Eq.-1 form: Σ aᵢVᵢ / Σ aᵢ.
pub fn weighted_average(vectors: &[Vector], membership: &[u8]) -> Result<Vector, CandidateError> {
    assert_eq!(vectors.len(), membership.len(), "membership length mismatch");
    let count = membership.iter().filter(|&&a| a != 0).count();
    if count == 0 {
        return Err(CandidateError::AllZeroMembership);
    }
    let dim = vectors[0].len();
    let mut acc = vec![0.0; dim];
    for (v, &a) in vectors.iter().zip(membership.iter()) {
        if a != 0 {
            for (s, x) in acc.iter_mut().zip(v.iter()) {
                *s += x;
            }
        }
    }
    for s in &mut acc {
        *s /= count as f64;
    }
    Ok(acc)
}

/// The instance vector with the smallest squared distance to the
/// instance mean; ties go to the lowest index.
pub fn median_vector(vectors: &[Vector]) -> Result<Vector, CandidateError> {
    let index = median_index(vectors)?;
    Ok(vectors[index].clone())
}

pub fn median_index(vectors: &[Vector]) -> Result<usize, CandidateError> {
    if vectors.is_empty() {
        return Err(CandidateError::EmptyInput);
    }
    let mean = crate::vector::mean(vectors);
    let mut best = 0usize;
    let mut best_d = squared_distance(&vectors[0], &mean);
    for (i, v) in vectors.iter().enumerate().skip(1) {
        let d = squared_distance(v, &mean);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}

/// Builds C1–C5 for a resolved class. The SVM model must come from the
/// clusters in `clustering` with cluster 0 as the positive side and the
/// relative instance order preserved; it is absent exactly when the
/// clustering is degenerate, in which case C1, C4, and C5 all collapse
/// to the instance mean.
pub fn build_candidates(
    resolved: &ResolvedClass,
    clustering: &SubClustering,
    model: Option<&SvmModel>,
) -> Result<CandidateSet, CandidateError> {
    let instances = &resolved.instance_vectors;
    let n = instances.len();
    let all_ones = vec![1u8; n];
    let c2 = weighted_average(instances, &all_ones)?;
    let c3 = median_vector(instances)?;

    if clustering.degenerate {
        return Ok(CandidateSet {
            c1: c2.clone(),
            c4: c2.clone(),
            c5: c2.clone(),
            c2,
            c3,
        });
    }

    let model = model.ok_or(CandidateError::MissingModel)?;
    let training_membership = support_membership(model, n);
    // Scatter from training order (cluster 0 first, then cluster 1) back
    // to the class's instance order.
    let mut membership = vec![0u8; n];
    let mut t = 0usize;
    for cluster in [0u8, 1u8] {
        for (i, &a) in clustering.assignment.iter().enumerate() {
            if a == cluster {
                membership[i] = training_membership[t];
                t += 1;
            }
        }
    }
    let c1 = weighted_average(instances, &membership)?;

    Ok(CandidateSet {
        c1,
        c2,
        c3,
        c4: clustering.mean0.clone(),
        c5: clustering.mean1.clone(),
    })
}

/// Lays the candidate set out as the N×5 matrix.
pub fn assemble_matrix(cs: &CandidateSet, n: usize) -> Result<CandidateMatrix, CandidateError> {
    for candidate in cs.as_array() {
        if candidate.len() != n {
            return Err(CandidateError::DimensionMismatch {
                expected: n,
                got: candidate.len(),
            });
        }
    }
    let rows = (0..n)
        .map(|i| [cs.c1[i], cs.c2[i], cs.c3[i], cs.c4[i], cs.c5[i]])
        .collect();
    Ok(CandidateMatrix { rows })
}
