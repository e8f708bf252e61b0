//! LDA-based classification score.
//!
//! Features are projected onto the directions maximizing between-class over
//! within-class scatter, each class is modelled as a unit-covariance Gaussian
//! around its projected mean, and the score is the mean Bayes posterior of
//! the true class.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::feature_store::{FeatureSet, Violation};
use crate::linalg::logsumexp;

/// Relative regularizer: `ε = EPSILON_SCALE · trace(Σ_ω) / ĥ`.
pub const EPSILON_SCALE: f64 = 1e-4;
/// Absolute floor for `ε` when the within-class scatter vanishes.
pub const EPSILON_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Scatter {
    /// `Σ_β = Σ_c K_c (μ_c − μ)(μ_c − μ)ᵀ`
    pub between: DMatrix<f64>,
    /// `Σ_ω = Σ_c Σ_{k ∈ c} (f̂_k − μ_c)(f̂_k − μ_c)ᵀ`
    pub within: DMatrix<f64>,
    /// First sample; means below are stored relative to it so identical
    /// rows cancel exactly.
    pub pivot: DVector<f64>,
    /// `μ − pivot`
    pub mean: DVector<f64>,
    /// `C × ĥ`, row `c` is `μ_c − pivot`.
    pub class_means: DMatrix<f64>,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    /// `ĥ × r`, columns ordered by descending eigenvalue.
    pub projection: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    /// Subtracted from features before projection.
    pub pivot: DVector<f64>,
    /// `C × r`, row `c` is `Uᵀ (μ_c − pivot)`.
    pub class_means_projected: DMatrix<f64>,
    pub class_priors: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub per_sample_posterior: Vec<f64>,
    pub score: f64,
}

fn check_classification_input(set: &FeatureSet) -> Result<()> {
    let v = set.validate(false);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    match set.classification_violations().first() {
        None => Ok(()),
        Some(Violation::EmptyClass { class }) => Err(Error::EmptyClass { class: *class }),
        Some(_) => Err(Error::TooFewClasses(set.class_count)),
    }
}

pub fn scatter_matrices(set: &FeatureSet) -> Result<Scatter> {
    check_classification_input(set)?;
    let mut x = set.feature_matrix();
    let (k, h, c) = (set.k, set.h, set.class_count);
    let pivot = x.row(0).transpose();
    for mut row in x.row_iter_mut() {
        row -= pivot.transpose();
    }

    let class_counts = set.class_counts();
    let mut class_means = DMatrix::zeros(c, h);
    for (row, &label) in x.row_iter().zip(&set.labels) {
        let mut m = class_means.row_mut(label as usize);
        m += row;
    }
    for (ci, &n) in class_counts.iter().enumerate() {
        class_means.row_mut(ci).unscale_mut(n as f64);
    }
    let mean = x.row_mean().transpose();

    let mut centered = x;
    for (mut row, &label) in centered.row_iter_mut().zip(&set.labels) {
        row -= class_means.row(label as usize);
    }
    let within = centered.tr_mul(&centered);

    // Rows of `weighted` are √K_c (μ_c − μ), so weightedᵀ weighted = Σ_β.
    let mut weighted = class_means.clone();
    for (ci, mut row) in weighted.row_iter_mut().enumerate() {
        row -= mean.transpose();
        row *= (class_counts[ci] as f64).sqrt();
    }
    let between = weighted.tr_mul(&weighted);

    debug_assert_eq!(class_counts.iter().sum::<usize>(), k);
    Ok(Scatter {
        between,
        within,
        pivot,
        mean,
        class_means,
        class_counts,
    })
}

/// Regularizer added to the within-class scatter before whitening.
pub fn regularizer(within: &DMatrix<f64>) -> f64 {
    let h = within.nrows().max(1) as f64;
    (EPSILON_SCALE * within.trace() / h).max(EPSILON_FLOOR)
}

/// Fits the projection by solving `Σ_β v = λ (Σ_ω + εI) v` through Cholesky
/// whitening and a symmetric eigendecomposition, keeping `r = min(C−1, ĥ)`
/// directions.
///
/// Directions are scaled so the pooled within-class covariance
/// `(Σ_ω + εI) / K` maps to the identity, which is the unit covariance the
/// Gaussian class model assumes.
pub fn lda_fit(set: &FeatureSet) -> Result<LdaModel> {
    let scatter = scatter_matrices(set)?;
    let h = set.h;
    let epsilon = regularizer(&scatter.within);

    let mut b = scatter.within.clone();
    for i in 0..h {
        b[(i, i)] += epsilon;
    }
    let chol = b.cholesky().ok_or(Error::Cholesky)?;
    let l = chol.l();

    // M = L⁻¹ Σ_β L⁻ᵀ
    let y = l
        .solve_lower_triangular(&scatter.between)
        .ok_or(Error::Cholesky)?;
    let mut m = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::Cholesky)?;
    m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let r = (set.class_count - 1).min(h);
    order.truncate(r);

    let eigenvalues = DVector::from_iterator(r, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let w = eig.eigenvectors.select_columns(&order);
    let mut projection = l.tr_solve_lower_triangular(&w).ok_or(Error::Cholesky)?;
    projection *= (set.k as f64).sqrt();

    let class_means_projected = &scatter.class_means * &projection;
    let class_priors = scatter
        .class_counts
        .iter()
        .map(|&n| n as f64 / set.k as f64)
        .collect();

    Ok(LdaModel {
        projection,
        eigenvalues,
        pivot: scatter.pivot,
        class_means_projected,
        class_priors,
        epsilon,
    })
}

/// Mean posterior of the true class under
/// `δ_c = f̄ᵀ(Uᵀμ_c) − ½‖Uᵀμ_c‖² + log(K_c/K)`, `f̄ = Uᵀ f̂`. Shifting
/// features and means by the same pivot changes every `δ_c` by the same
/// amount and leaves the posterior unchanged.
pub fn classification_score(set: &FeatureSet, model: &LdaModel) -> Result<ClassificationResult> {
    if set.h != model.projection.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "features have dimension {}, model expects {}",
            set.h,
            model.projection.nrows()
        )));
    }
    if set.class_count != model.class_means_projected.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "feature set has {} classes, model has {}",
            set.class_count,
            model.class_means_projected.nrows()
        )));
    }
    let v = set.validate(false);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }

    let means = &model.class_means_projected;
    let mut x = set.feature_matrix();
    for mut row in x.row_iter_mut() {
        row -= model.pivot.transpose();
    }
    let projected = x * &model.projection;
    let logits = &projected * means.transpose();
    let offsets: Vec<f64> = means
        .row_iter()
        .zip(&model.class_priors)
        .map(|(m, &p)| -0.5 * m.norm_squared() + p.ln())
        .collect();

    let mut delta = vec![0.0; set.class_count];
    let per_sample_posterior: Vec<f64> = logits
        .row_iter()
        .zip(&set.labels)
        .map(|(row, &label)| {
            for (d, (&l, &o)) in delta.iter_mut().zip(row.iter().zip(&offsets)) {
                *d = l + o;
            }
            (delta[label as usize] - logsumexp(delta.iter().copied())).exp()
        })
        .collect();

    let score = per_sample_posterior.iter().sum::<f64>() / per_sample_posterior.len() as f64;
    Ok(ClassificationResult {
        per_sample_posterior,
        score,
    })
}

/// Fit on `set` and score the same samples.
pub fn lda_score(set: &FeatureSet) -> Result<ClassificationResult> {
    let model = lda_fit(set)?;
    classification_score(set, &model)
}
