//! SVD-based regression score.
//!
//! Box targets are regressed on the features with a truncated pseudo-inverse
//! `f̂† = V diag(ŝ)⁻¹ Uᵀ` that keeps the largest 80% of singular values
//! (by count). The score is the negated mean squared reconstruction error, so
//! features that linearly explain the boxes score close to 0.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feature_store::FeatureSet;
use crate::linalg::ThinSvd;

/// Singular values below this fraction of the largest are never inverted.
pub const RELATIVE_CUTOFF: f64 = 1e-12;
/// Shuffle seed of the 7:3 holdout split.
pub const HOLDOUT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdRegressionResult {
    pub score: f64,
    pub per_column_mse: [f64; 4],
    pub kept_rank: usize,
    pub holdout: bool,
}

/// `ceil(0.8 · min(k, h))`.
pub fn kept_rank(k: usize, h: usize) -> usize {
    (4 * k.min(h)).div_ceil(5)
}

/// Rows used for fitting in holdout mode, `ceil(0.7 · k)`.
pub fn holdout_train_len(k: usize) -> usize {
    (7 * k).div_ceil(10)
}

fn effective_rank(s: &nalgebra::DVector<f64>, rank: usize) -> usize {
    let cutoff = s.iter().copied().fold(0.0, f64::max) * RELATIVE_CUTOFF;
    s.iter()
        .take(rank)
        .take_while(|&&v| v > cutoff && v > 0.0)
        .count()
}

/// `b̂ = U_r U_rᵀ b` for an explicit number of kept singular directions.
pub fn reconstruct_with_rank(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    rank: usize,
) -> DMatrix<f64> {
    assert_eq!(features.nrows(), targets.nrows(), "row count mismatch");
    let svd = ThinSvd::new(features);
    project(&svd, targets, rank)
}

fn project(svd: &ThinSvd, targets: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let r = effective_rank(&svd.s, rank);
    let u = svd.u.columns(0, r);
    u * (u.transpose() * targets)
}

/// Reconstruction `b̂ = f̂ f̂† b` with the default truncation, plus the rank
/// that truncation keeps.
pub fn truncated_reconstruction(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> (DMatrix<f64>, usize) {
    let rank = kept_rank(features.nrows(), features.ncols());
    (reconstruct_with_rank(features, targets, rank), rank)
}

/// Truncated least-squares weights `V_r diag(s_r)⁻¹ U_rᵀ b`, `ĥ × targets`.
pub fn truncated_weights(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    rank: usize,
) -> DMatrix<f64> {
    let svd = ThinSvd::new(features);
    let r = effective_rank(&svd.s, rank);
    let mut coords = svd.u.columns(0, r).transpose() * targets;
    for (i, mut row) in coords.row_iter_mut().enumerate() {
        row /= svd.s[i];
    }
    svd.v.columns(0, r) * coords
}

fn column_mse(truth: &DMatrix<f64>, approx: &DMatrix<f64>) -> [f64; 4] {
    let n = truth.nrows() as f64;
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (truth.column(j) - approx.column(j)).norm_squared() / n;
    }
    out
}

/// `S_reg = −(1/(4K)) Σ (b − b̂)²`. With `holdout`, the map is fitted on the
/// first `ceil(0.7K)` rows of a seeded shuffle and evaluated on the rest.
pub fn regression_score(set: &FeatureSet, holdout: bool) -> Result<SvdRegressionResult> {
    let targets = set.box_matrix().ok_or(Error::MissingBoxes)?;
    let violations = set.validate(true);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    score_targets(&set.feature_matrix(), &targets, holdout)
}

/// [`regression_score`] on raw matrices; `targets` must be `K × 4`.
pub fn score_targets(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    holdout: bool,
) -> Result<SvdRegressionResult> {
    let (k, h) = features.shape();
    if targets.shape() != (k, 4) {
        return Err(Error::DimensionMismatch(format!(
            "targets are {:?}, expected ({k}, 4)",
            targets.shape()
        )));
    }

    let (per_column_mse, kept) = if holdout {
        let n_train = holdout_train_len(k);
        let n_test = k - n_train;
        if n_test < 2 {
            return Err(Error::HoldoutTooSmall { test: n_test });
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(HOLDOUT_SEED));
        let (train, test) = order.split_at(n_train);

        let rank = kept_rank(n_train, h);
        let w = truncated_weights(
            &features.select_rows(train),
            &targets.select_rows(train),
            rank,
        );
        let predicted = features.select_rows(test) * w;
        (column_mse(&targets.select_rows(test), &predicted), rank)
    } else {
        let (approx, rank) = truncated_reconstruction(features, targets);
        (column_mse(targets, &approx), rank)
    };

    let score = -per_column_mse.iter().sum::<f64>() / 4.0;
    Ok(SvdRegressionResult {
        score,
        per_column_mse,
        kept_rank: kept,
        holdout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kept_rank_counts() {
        assert_eq!(kept_rank(4, 4), 4);
        assert_eq!(kept_rank(5, 5), 4);
        assert_eq!(kept_rank(2, 1), 1);
        assert_eq!(kept_rank(5000, 512), 410);
        assert_eq!(kept_rank(10, 100), 8);
        assert_eq!(holdout_train_len(10), 7);
        assert_eq!(holdout_train_len(11), 8);
    }

    #[test]
    fn identity_features_reconstruct_exactly() {
        let f = DMatrix::<f64>::identity(4, 4);
        let b = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 / 16.0);
        let (approx, r) = truncated_reconstruction(&f, &b);
        assert_eq!(r, 4);
        assert!((approx - &b).amax() < 1e-15);
    }

    #[test]
    fn constant_column_removes_antisymmetric_target() {
        let f = DMatrix::from_element(2, 1, 1.0);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let (approx, r) = truncated_reconstruction(&f, &b);
        assert_eq!(r, 1);
        assert!(approx.amax() < 1e-15);
    }

    #[test]
    fn truncation_drops_smallest_direction() {
        let f = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 4.0, 3.0, 2.0, 1.0]));
        let mut b = DMatrix::zeros(5, 4);
        b.row_mut(4).fill(1.0);
        let (approx, r) = truncated_reconstruction(&f, &b);
        assert_eq!(r, 4);
        assert!(approx.amax() < 1e-15);
    }

    fn set_with(features: Vec<f32>, h: usize, boxes: Vec<f32>) -> FeatureSet {
        let k = features.len() / h;
        FeatureSet::new(
            "m",
            "d",
            h,
            2,
            features,
            (0..k).map(|i| (i % 2) as i32).collect(),
            Some(boxes),
        )
    }

    #[test]
    fn score_examples() {
        let mut eye = vec![0.0f32; 16];
        for i in 0..4 {
            eye[i * 5] = 1.0;
        }
        let boxes: Vec<f32> = (0..16).map(|i| i as f32 / 20.0).collect();
        let r = regression_score(&set_with(eye, 4, boxes), false).unwrap();
        assert!(r.score.abs() < 1e-15);
        assert_eq!(r.kept_rank, 4);

        let f = DMatrix::from_element(2, 1, 1.0);
        let b = DMatrix::from_fn(2, 4, |i, _| if i == 0 { 1.0 } else { -1.0 });
        let r = score_targets(&f, &b, false).unwrap();
        assert_eq!(r.per_column_mse, [1.0; 4]);
        assert_eq!(r.score, -1.0);

        let mut diag = vec![0.0f32; 25];
        for (i, s) in [5.0, 4.0, 3.0, 2.0, 1.0].into_iter().enumerate() {
            diag[i * 6] = s;
        }
        let mut boxes = vec![0.0f32; 20];
        boxes[16..].fill(1.0);
        let r = regression_score(&set_with(diag, 5, boxes), false).unwrap();
        assert!((r.score + 0.2).abs() < 1e-15);
    }

    #[test]
    fn missing_boxes_and_small_holdout() {
        let s = FeatureSet::new("m", "d", 1, 2, vec![1.0, 2.0], vec![0, 1], None);
        assert!(matches!(
            regression_score(&s, false),
            Err(Error::MissingBoxes)
        ));

        let s = set_with(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1, vec![0.5; 20]);
        assert!(matches!(
            regression_score(&s, true),
            Err(Error::HoldoutTooSmall { test: 1 })
        ));
    }

    #[test]
    fn holdout_is_deterministic_and_exact_for_linear_targets() {
        let k = 20;
        let h = 3;
        let features: Vec<f32> = (0..k * h)
            .map(|i| ((i * 13) % 7) as f32 / 7.0 + (i % 3) as f32)
            .collect();
        let boxes: Vec<f32> = (0..k)
            .flat_map(|r| {
                let row = &features[r * h..(r + 1) * h];
                let v = 0.1 * row[0] + 0.05 * row[1] + 0.02 * row[2];
                [v, v, v, v]
            })
            .collect();
        let s = set_with(features, h, boxes);
        let a = regression_score(&s, true).unwrap();
        let b = regression_score(&s, true).unwrap();
        assert_eq!(a, b);
        assert!(a.holdout);
        assert_eq!(a.kept_rank, 3);
        assert!(a.score > -1e-10);
    }
}
