//! Soft-margin linear SVM between the two sub-clusters.
//!
//! The classifier itself is never used on new points; the only product
//! is the support-vector set marking the schism between the clusters.
//! The dual is solved by sequential pairwise optimization, always
//! stepping on the maximal-violating pair, so the solve is deterministic
//! and the duality gap bounds every KKT residual at termination.

use thiserror::Error;

use crate::vector::{dot, norm, Vector};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("SVM training requires at least one point on each side")]
    EmptySide,
}

#[derive(Debug, Clone, Copy)]
pub struct SvmConfig {
    /// Soft-margin box constraint.
    pub c: f64,
    pub kkt_tol: f64,
    /// Multipliers above this count as support vectors.
    pub support_eps: f64,
    /// Cap on optimization passes (n pair steps each); 0 means 10 per
    /// training point.
    pub max_passes: usize,
    /// Retained for interface stability; the maximal-violating-pair
    /// selection is deterministic without it.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kkt_tol: 1e-3,
            support_eps: 1e-8,
            max_passes: 0,
            seed: 0,
        }
    }
}

/// Trained model over the concatenation `pos ++ neg` (order preserved).
/// `fallback_all` marks a fully degenerate overlap (`w` collapsed to
/// zero), where every point is treated as a support vector.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub w: Vector,
    pub b: f64,
    pub alphas: Vec<f64>,
    pub support_mask: Vec<bool>,
    pub c: f64,
    pub fallback_all: bool,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn support_count(&self) -> usize {
        self.support_mask.iter().filter(|&&s| s).count()
    }
}

/// Eq.-style membership sequence over the training points: 1 for support
/// vectors, 0 otherwise; all ones under `fallback_all`.
pub fn support_membership(model: &SvmModel, n_total: usize) -> Vec<u8> {
    assert_eq!(model.support_mask.len(), n_total, "point count mismatch");
    if model.fallback_all {
        return vec![1; n_total];
    }
    model.support_mask.iter().map(|&s| s as u8).collect()
}

/// Trains the soft-margin dual with a linear kernel. `pos` points get
/// label +1 and `neg` points −1; training order is pos then neg.
pub fn train_linear_svm(
    pos: &[Vector],
    neg: &[Vector],
    config: &SvmConfig,
) -> Result<SvmModel, SvmError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(SvmError::EmptySide);
    }
    let dim = pos[0].len();
    let points: Vec<&Vector> = pos.iter().chain(neg.iter()).collect();
    let labels: Vec<f64> = std::iter::repeat(1.0)
        .take(pos.len())
        .chain(std::iter::repeat(-1.0).take(neg.len()))
        .collect();
    let n = points.len();
    let max_steps = n * if config.max_passes == 0 {
        10 * n
    } else {
        config.max_passes
    };

    // Drive the gap two decades below the guarantee so the margin is
    // accurate well past kkt_tol whenever the step budget allows.
    let mut solver = Smo {
        points: &points,
        labels: &labels,
        alphas: vec![0.0; n],
        w: vec![0.0; dim],
        c: config.c,
        gap_tol: config.kkt_tol / 50.0,
    };
    let mut b = solver.run(max_steps);

    // Shed the drift of incremental updates before deriving anything.
    solver.w = vec![0.0; dim];
    for ((&a, y), x) in solver.alphas.iter().zip(labels.iter()).zip(points.iter()) {
        for (wk, xk) in solver.w.iter_mut().zip(x.iter()) {
            *wk += a * y * xk;
        }
    }

    // Threshold from margin support vectors: y_i (w·x_i + b) = 1 on average.
    let margin: Vec<usize> = (0..n)
        .filter(|&i| {
            solver.alphas[i] > config.support_eps && solver.alphas[i] < config.c - config.support_eps
        })
        .collect();
    if !margin.is_empty() {
        b = margin
            .iter()
            .map(|&i| labels[i] - dot(&solver.w, points[i]))
            .sum::<f64>()
            / margin.len() as f64;
    }

    let fallback_all = norm(&solver.w) < 1e-12;
    let support_mask: Vec<bool> = solver
        .alphas
        .iter()
        .map(|&a| fallback_all || a > config.support_eps)
        .collect();
    Ok(SvmModel {
        w: solver.w,
        b,
        alphas: solver.alphas,
        support_mask,
        c: config.c,
        fallback_all,
    })
}

struct Smo<'a> {
    points: &'a [&'a Vector],
    labels: &'a [f64],
    alphas: Vec<f64>,
    w: Vector,
    c: f64,
    gap_tol: f64,
}

impl Smo<'_> {
    /// Optimizes until the violating-pair gap closes or the step budget
    /// runs out; returns the threshold b at the center of the final gap.
    fn run(&mut self, max_steps: usize) -> f64 {
        let n = self.points.len();
        let mut b = 0.0;
        for _ in 0..max_steps {
            // v_i = y_i − w·x_i; the optimal b lies between the largest
            // v over points free to grow and the smallest over points
            // free to shrink.
            let mut up: Option<(usize, f64)> = None;
            let mut low: Option<(usize, f64)> = None;
            for i in 0..n {
                let v = self.labels[i] - dot(&self.w, self.points[i]);
                let (a, y) = (self.alphas[i], self.labels[i]);
                let in_up = (y > 0.0 && a < self.c) || (y < 0.0 && a > 0.0);
                let in_low = (y < 0.0 && a < self.c) || (y > 0.0 && a > 0.0);
                if in_up && up.map_or(true, |(_, m)| v > m) {
                    up = Some((i, v));
                }
                if in_low && low.map_or(true, |(_, m)| v < m) {
                    low = Some((i, v));
                }
            }
            let ((i_up, m_up), (i_low, m_low)) = match (up, low) {
                (Some(u), Some(l)) => (u, l),
                _ => break,
            };
            b = 0.5 * (m_up + m_low);
            if m_up - m_low <= self.gap_tol {
                break;
            }
            if !self.take_step(i_up, i_low) {
                // The worst pair is numerically stuck; try both halves
                // against the rest before giving in.
                let mut progressed = false;
                for j in 0..n {
                    if j != i_up && j != i_low && self.take_step(i_up, j) {
                        progressed = true;
                        break;
                    }
                }
                if !progressed {
                    for j in 0..n {
                        if j != i_up && j != i_low && self.take_step(j, i_low) {
                            progressed = true;
                            break;
                        }
                    }
                }
                if !progressed {
                    break;
                }
            }
        }
        b
    }

    /// Solves the two-variable subproblem exactly. Only differences of
    /// the prediction errors enter, so no threshold is needed here.
    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        let (a1_old, a2_old) = (self.alphas[i1], self.alphas[i2]);
        let (y1, y2) = (self.labels[i1], self.labels[i2]);
        let e1 = dot(&self.w, self.points[i1]) - y1;
        let e2 = dot(&self.w, self.points[i2]) - y2;
        let s = y1 * y2;

        let (low, high) = if s < 0.0 {
            let d = a2_old - a1_old;
            (d.max(0.0), (self.c + d).min(self.c))
        } else {
            let d = a2_old + a1_old;
            ((d - self.c).max(0.0), d.min(self.c))
        };
        if high - low < 1e-15 {
            return false;
        }

        let k11 = dot(self.points[i1], self.points[i1]);
        let k22 = dot(self.points[i2], self.points[i2]);
        let k12 = dot(self.points[i1], self.points[i2]);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(low, high)
        } else {
            // Flat direction: pick the boundary with the lower objective.
            let f1 = y1 * e1 - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * e2 - a2_old * k22 - s * a1_old * k12;
            let l1 = a1_old + s * (a2_old - low);
            let h1 = a1_old + s * (a2_old - high);
            let obj_low = l1 * f1 + low * f2 + 0.5 * l1 * l1 * k11 + 0.5 * low * low * k22
                + s * low * l1 * k12;
            let obj_high = h1 * f1 + high * f2 + 0.5 * h1 * h1 * k11 + 0.5 * high * high * k22
                + s * high * h1 * k12;
            if obj_low < obj_high - 1e-12 {
                low
            } else if obj_high < obj_low - 1e-12 {
                high
            } else {
                return false;
            }
        };
        a2 = self.snap(a2);
        if (a2 - a2_old).abs() < 1e-14 * (a2 + a2_old + 1e-14) {
            return false;
        }
        // Snap the follower too: an unsnapped float crumb would keep a
        // retired point inside the working sets forever.
        let a1 = self.snap(a1_old + s * (a2_old - a2));

        for ((wk, x1k), x2k) in self
            .w
            .iter_mut()
            .zip(self.points[i1].iter())
            .zip(self.points[i2].iter())
        {
            *wk += y1 * (a1 - a1_old) * x1k + y2 * (a2 - a2_old) * x2k;
        }
        self.alphas[i1] = a1;
        self.alphas[i2] = a2;
        true
    }

    fn snap(&self, a: f64) -> f64 {
        let tol = 1e-10 + 1e-12 * self.c;
        if a < tol {
            0.0
        } else if a > self.c - tol {
            self.c
        } else {
            a
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config_with_c(c: f64) -> SvmConfig {
        SvmConfig {
            c,
            ..SvmConfig::default()
        }
    }

    /// Verifies the KKT conditions at the given tolerance.
    fn assert_kkt(model: &SvmModel, pos: &[Vector], neg: &[Vector], tol: f64) {
        let points: Vec<&Vector> = pos.iter().chain(neg.iter()).collect();
        let labels: Vec<f64> = std::iter::repeat(1.0)
            .take(pos.len())
            .chain(std::iter::repeat(-1.0).take(neg.len()))
            .collect();
        let mut dual_sum = 0.0;
        for (i, (x, y)) in points.iter().zip(labels.iter()).enumerate() {
            let a = model.alphas[i];
            assert!(a >= -1e-12 && a <= model.c + 1e-12, "alpha out of box");
            dual_sum += a * y;
            let yf = y * model.decision(x);
            if a < 1e-8 {
                assert!(yf >= 1.0 - tol, "KKT zero-alpha: yf={}", yf);
            } else if a > model.c - 1e-8 {
                assert!(yf <= 1.0 + tol, "KKT bound-alpha: yf={}", yf);
            } else {
                assert!((yf - 1.0).abs() <= tol, "KKT margin: yf={}", yf);
            }
        }
        assert!(dual_sum.abs() <= 1e-8, "sum alpha_i y_i = {}", dual_sum);
    }

    /// Brute-force maximum-margin oracle for separable data: enumerates
    /// candidate support sets up to size dim+1, solves the active-set
    /// linear system for (alphas, b), and keeps the feasible hyperplane
    /// with the smallest ‖w‖.
    pub(crate) fn oracle_max_margin(points: &[Vector], labels: &[f64]) -> Option<(Vector, f64)> {
        let n = points.len();
        let dim = points[0].len();
        let max_size = (dim + 1).min(n);
        let mut best: Option<(Vector, f64, f64)> = None;
        let mut subset: Vec<usize> = Vec::new();
        enumerate_subsets(n, max_size, &mut subset, &mut |s| {
            if let Some((w, b)) = solve_active_set(points, labels, s) {
                let feasible = points
                    .iter()
                    .zip(labels.iter())
                    .all(|(x, y)| y * (dot(&w, x) + b) >= 1.0 - 1e-7);
                if feasible {
                    let w2 = dot(&w, &w);
                    if w2 > 1e-18 && best.as_ref().map_or(true, |(_, _, bw2)| w2 < *bw2) {
                        best = Some((w.clone(), b, w2));
                    }
                }
            }
        });
        best.map(|(w, b, _)| (w, b))
    }

    fn enumerate_subsets(
        n: usize,
        max_size: usize,
        current: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        fn rec(
            next: usize,
            n: usize,
            max_size: usize,
            current: &mut Vec<usize>,
            visit: &mut impl FnMut(&[usize]),
        ) {
            if current.len() >= 2 {
                visit(current);
            }
            if current.len() == max_size {
                return;
            }
            for i in next..n {
                current.push(i);
                rec(i + 1, n, max_size, current, visit);
                current.pop();
            }
        }
        rec(0, n, max_size, current, visit);
    }

    /// Solves for alphas and b under active constraints y_i(w·x_i+b)=1,
    /// w = Σ α_j y_j x_j, Σ α_j y_j = 0. Returns None when the system is
    /// singular or any α is negative.
    fn solve_active_set(points: &[Vector], labels: &[f64], subset: &[usize]) -> Option<(Vector, f64)> {
        let m = subset.len();
        if !subset.iter().any(|&i| labels[i] > 0.0) || !subset.iter().any(|&i| labels[i] < 0.0) {
            return None;
        }
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        for (r, &i) in subset.iter().enumerate() {
            for (c, &j) in subset.iter().enumerate() {
                a[r][c] = labels[j] * dot(&points[i], &points[j]);
            }
            a[r][m] = 1.0;
            rhs[r] = labels[i];
        }
        for (c, &j) in subset.iter().enumerate() {
            a[m][c] = labels[j];
        }
        let sol = gauss_solve(&mut a, &mut rhs)?;
        if sol[..m].iter().any(|&alpha| alpha < -1e-9) {
            return None;
        }
        let dim = points[0].len();
        let mut w = vec![0.0; dim];
        for (c, &j) in subset.iter().enumerate() {
            for (wk, xk) in w.iter_mut().zip(points[j].iter()) {
                *wk += sol[c] * labels[j] * xk;
            }
        }
        Some((w, sol[m]))
    }

    fn gauss_solve(a: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
        let n = rhs.len();
        for col in 0..n {
            let pivot = (col..n).max_by(|&r1, &r2| {
                a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap()
            })?;
            if a[pivot][col].abs() < 1e-12 {
                return None;
            }
            a.swap(col, pivot);
            rhs.swap(col, pivot);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    rhs[row] -= f * rhs[col];
                }
            }
        }
        Some((0..n).map(|i| rhs[i] / a[i][i]).collect())
    }

    /// Seeded separable instance: points placed at exact signed distances
    /// from a random hyperplane, at least `gap` away on the correct side.
    pub(crate) fn random_separable(
        rng: &mut ChaCha8Rng,
        n: usize,
        dim: usize,
        gap: f64,
    ) -> (Vec<Vector>, Vec<Vector>) {
        let mut normal: Vector = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = norm(&normal);
        for x in &mut normal {
            *x /= len.max(1e-9);
        }
        let offset: f64 = rng.gen_range(-0.5..0.5);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..n {
            let y = if i < n / 2 { 1.0 } else { -1.0 };
            let raw: Vector = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let current = dot(&normal, &raw) + offset;
            let target = y * (gap + rng.gen_range(0.0..2.0));
            let shift = target - current;
            let point: Vector = raw
                .iter()
                .zip(normal.iter())
                .map(|(x, nk)| x + shift * nk)
                .collect();
            if y > 0.0 {
                pos.push(point);
            } else {
                neg.push(point);
            }
        }
        (pos, neg)
    }

    #[test]
    fn symmetric_two_point_problem() {
        let pos = vec![vec![1.0]];
        let neg = vec![vec![-1.0]];
        let model = train_linear_svm(&pos, &neg, &config_with_c(10.0)).unwrap();
        assert!(!model.fallback_all);
        assert!((model.w[0] - 1.0).abs() < 1e-6, "w = {:?}", model.w);
        assert!(model.b.abs() < 1e-6, "b = {}", model.b);
        assert_eq!(support_membership(&model, 2), vec![1, 1]);
        assert_kkt(&model, &pos, &neg, 1e-3);
    }

    #[test]
    fn planar_problem_matches_dual_oracle() {
        let pos = vec![vec![2.0, 0.0], vec![3.0, 1.0]];
        let neg = vec![vec![-2.0, 0.0], vec![-3.0, 1.0]];
        let model = train_linear_svm(&pos, &neg, &config_with_c(10.0)).unwrap();
        assert!((model.w[0] - 0.5).abs() < 1e-6, "w = {:?}", model.w);
        assert!(model.w[1].abs() < 1e-6);
        assert!(model.b.abs() < 1e-6);
        assert_eq!(support_membership(&model, 4), vec![1, 0, 1, 0]);
        assert_kkt(&model, &pos, &neg, 1e-3);

        let points: Vec<Vector> = pos.iter().chain(neg.iter()).cloned().collect();
        let labels = vec![1.0, 1.0, -1.0, -1.0];
        let (ow, ob) = oracle_max_margin(&points, &labels).unwrap();
        assert!((ow[0] - 0.5).abs() < 1e-9 && ow[1].abs() < 1e-9 && ob.abs() < 1e-9);
    }

    #[test]
    fn identical_opposing_points_fall_back() {
        let pos = vec![vec![0.0, 0.0]];
        let neg = vec![vec![0.0, 0.0]];
        let model = train_linear_svm(&pos, &neg, &config_with_c(1.0)).unwrap();
        assert!(model.fallback_all);
        assert_eq!(support_membership(&model, 2), vec![1, 1]);
    }

    #[test]
    fn empty_side_is_error() {
        assert!(matches!(
            train_linear_svm(&[], &[vec![1.0]], &SvmConfig::default()),
            Err(SvmError::EmptySide)
        ));
    }

    #[test]
    fn fallback_membership_is_all_ones() {
        let pos = vec![vec![0.0], vec![0.0]];
        let neg = vec![vec![0.0]];
        let model = train_linear_svm(&pos, &neg, &config_with_c(1.0)).unwrap();
        assert!(model.fallback_all);
        assert_eq!(support_membership(&model, 3), vec![1, 1, 1]);
    }

    #[test]
    fn separable_instances_match_margin_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        for case in 0..40 {
            let n = rng.gen_range(4..=20);
            let dim = rng.gen_range(1..=5);
            let (pos, neg) = random_separable(&mut rng, n, dim, 0.2);
            let model = train_linear_svm(&pos, &neg, &config_with_c(1e6)).unwrap();
            assert_kkt(&model, &pos, &neg, 1e-3);
            let points: Vec<Vector> = pos.iter().chain(neg.iter()).cloned().collect();
            let labels: Vec<f64> = std::iter::repeat(1.0)
                .take(pos.len())
                .chain(std::iter::repeat(-1.0).take(neg.len()))
                .collect();
            let (ow, _) = oracle_max_margin(&points, &labels)
                .unwrap_or_else(|| panic!("oracle failed on case {}", case));
            let margin = 2.0 / norm(&model.w);
            let oracle_margin = 2.0 / norm(&ow);
            let rel = (margin - oracle_margin).abs() / oracle_margin;
            assert!(
                rel < 1e-4,
                "case {}: margin {} vs oracle {} (rel {})",
                case,
                margin,
                oracle_margin,
                rel
            );
        }
    }

    #[test]
    fn both_sides_contribute_support_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (pos, neg) = random_separable(&mut rng, 12, 3, 0.3);
            let model = train_linear_svm(&pos, &neg, &config_with_c(1e6)).unwrap();
            assert!(!model.fallback_all);
            let n_pos = pos.len();
            let mask = &model.support_mask;
            assert!(mask[..n_pos].iter().any(|&s| s), "no positive-side SV");
            assert!(mask[n_pos..].iter().any(|&s| s), "no negative-side SV");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scaling_inputs_scales_w_inversely(seed in 0u64..500, scale in 0.5f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (pos, neg) = random_separable(&mut rng, 10, 2, 0.3);
            let config = config_with_c(1e8);
            let base = train_linear_svm(&pos, &neg, &config).unwrap();
            let scale_vecs = |vs: &[Vector]| -> Vec<Vector> {
                vs.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect()
            };
            let scaled = train_linear_svm(&scale_vecs(&pos), &scale_vecs(&neg), &config).unwrap();
            for (a, b) in base.w.iter().zip(scaled.w.iter()) {
                prop_assert!((a / scale - b).abs() < 1e-4 * (1.0 + a.abs()),
                    "w {:?} vs scaled {:?}", base.w, scaled.w);
            }
            prop_assert_eq!(&base.support_mask, &scaled.support_mask);
        }

        #[test]
        fn dual_feasibility_on_random_overlapping_data(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos: Vec<Vector> = (0..8)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.5)).collect())
                .collect();
            let neg: Vec<Vector> = (0..8)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.5..1.0)).collect())
                .collect();
            let model = train_linear_svm(&pos, &neg, &config_with_c(1.0)).unwrap();
            let mut dual_sum = 0.0;
            for (i, &a) in model.alphas.iter().enumerate() {
                prop_assert!(a >= -1e-12 && a <= 1.0 + 1e-12);
                dual_sum += a * if i < 8 { 1.0 } else { -1.0 };
            }
            prop_assert!(dual_sum.abs() <= 1e-8);
            for x in pos.iter().chain(neg.iter()) {
                prop_assert!(model.decision(x).is_finite());
            }
        }
    }
}
