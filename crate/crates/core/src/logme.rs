//! Evidence-maximization baseline.
//!
//! Bayesian linear regression `b = f̂ w + noise` with prior
//! `w ~ N(0, α⁻¹ I)` and noise precision `γ`. The log marginal likelihood
//!
//! ```text
//! L(α, γ) = K/2 log γ + ĥ/2 log α − K/2 log 2π
//!         − γ/2 ‖f̂ q − b‖² − α/2 qᵀq − ½ log|A|,
//! A = αI + γ f̂ᵀf̂,   q = γ A⁻¹ f̂ᵀ b
//! ```
//!
//! is maximized over `(α, γ)` by fixed-point iteration. All quantities are
//! evaluated in the eigenbasis of `f̂ᵀf̂`, which is computed once per feature
//! matrix and shared by every target column.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::feature_store::FeatureSet;

pub const MAX_ITERATIONS: usize = 200;
/// Stop once the relative change in evidence falls below this.
pub const TOLERANCE: f64 = 1e-6;
/// `α` and `γ` are clamped to `[PARAM_MIN, PARAM_MAX]`; noiseless or zero
/// targets otherwise drive them to infinity.
pub const PARAM_MIN: f64 = 1e-10;
pub const PARAM_MAX: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceResult {
    pub evidence: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral decomposition of one feature matrix.
#[derive(Debug, Clone)]
pub struct EvidenceModel {
    k: usize,
    h: usize,
    /// Nonzero eigenvalues of `f̂ᵀf̂` (equivalently of `f̂f̂ᵀ`).
    sigma: Vec<f64>,
    /// `K × n` left singular vectors matching `sigma`.
    left: DMatrix<f64>,
}

/// One target expressed in the eigenbasis.
struct Spectrum<'a> {
    sigma: &'a [f64],
    /// `(u_iᵀ b)²`
    z2: Vec<f64>,
    /// Part of `‖b‖²` outside the column space of `f̂`.
    outside: f64,
}

impl EvidenceModel {
    pub fn new(features: &DMatrix<f64>) -> Self {
        let (k, h) = features.shape();
        // Decompose the smaller Gram matrix.
        let (sigma, left) = if k >= h {
            let eig = features.tr_mul(features).symmetric_eigen();
            let max = eig.eigenvalues.amax();
            let keep: Vec<usize> = (0..h)
                .filter(|&i| eig.eigenvalues[i] > max * 1e-12 && eig.eigenvalues[i] > 0.0)
                .collect();
            let sigma: Vec<f64> = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
            let mut left = features * eig.eigenvectors.select_columns(&keep);
            for (mut col, s) in left.column_iter_mut().zip(&sigma) {
                col /= s.sqrt();
            }
            (sigma, left)
        } else {
            let eig = (features * features.transpose()).symmetric_eigen();
            let max = eig.eigenvalues.amax();
            let keep: Vec<usize> = (0..k)
                .filter(|&i| eig.eigenvalues[i] > max * 1e-12 && eig.eigenvalues[i] > 0.0)
                .collect();
            let sigma = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
            (sigma, eig.eigenvectors.select_columns(&keep))
        };
        EvidenceModel { k, h, sigma, left }
    }

    fn spectrum(&self, target: &DVector<f64>) -> Spectrum<'_> {
        let z = self.left.tr_mul(target);
        let z2: Vec<f64> = z.iter().map(|v| v * v).collect();
        let outside = (target.norm_squared() - z2.iter().sum::<f64>()).max(0.0);
        Spectrum {
            sigma: &self.sigma,
            z2,
            outside,
        }
    }

    fn check_target(&self, target: &DVector<f64>) -> Result<()> {
        if target.len() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "target has {} entries, features have {} rows",
                target.len(),
                self.k
            )));
        }
        Ok(())
    }

    /// Log evidence at fixed `(α, γ)`.
    pub fn evidence_at(&self, target: &DVector<f64>, alpha: f64, gamma: f64) -> Result<f64> {
        self.check_target(target)?;
        Ok(self
            .spectrum(target)
            .evidence(self.k, self.h, alpha, gamma)
            .0)
    }

    /// Fixed-point evidence maximization from `α = γ = 1`.
    pub fn maximize(&self, target: &DVector<f64>) -> Result<EvidenceResult> {
        self.check_target(target)?;
        let spec = self.spectrum(target);
        let (k, h) = (self.k, self.h);

        let (mut alpha, mut gamma) = (1.0, 1.0);
        let (mut evidence, mut stats) = spec.evidence(k, h, alpha, gamma);
        if !evidence.is_finite() {
            return Err(Error::NonFiniteEvidence);
        }
        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let next_alpha = stats.effective_params / stats.weight_norm2;
            let next_gamma = (k as f64 - stats.effective_params) / stats.residual;
            if next_alpha.is_nan() || next_gamma.is_nan() {
                return Err(Error::NonFiniteEvidence);
            }
            alpha = next_alpha.clamp(PARAM_MIN, PARAM_MAX);
            gamma = next_gamma.clamp(PARAM_MIN, PARAM_MAX);

            let previous = evidence;
            (evidence, stats) = spec.evidence(k, h, alpha, gamma);
            if !evidence.is_finite() {
                return Err(Error::NonFiniteEvidence);
            }
            if (evidence - previous).abs() <= TOLERANCE * previous.abs() {
                converged = true;
                break;
            }
        }
        Ok(EvidenceResult {
            evidence,
            alpha,
            gamma,
            iterations,
            converged,
        })
    }
}

struct FitStats {
    /// `Σ γσ_i / (α + γσ_i)`
    effective_params: f64,
    /// `qᵀq`
    weight_norm2: f64,
    /// `‖f̂ q − b‖²`
    residual: f64,
}

impl Spectrum<'_> {
    fn evidence(&self, k: usize, h: usize, alpha: f64, gamma: f64) -> (f64, FitStats) {
        let mut effective_params = 0.0;
        let mut weight_norm2 = 0.0;
        let mut residual = self.outside;
        let mut log_det = (h - self.sigma.len()) as f64 * alpha.ln();
        for (&s, &z2) in self.sigma.iter().zip(&self.z2) {
            let d = alpha + gamma * s;
            effective_params += gamma * s / d;
            weight_norm2 += gamma * gamma * s * z2 / (d * d);
            residual += z2 * (alpha / d).powi(2);
            log_det += d.ln();
        }
        let (kf, hf) = (k as f64, h as f64);
        let evidence = 0.5 * kf * gamma.ln() + 0.5 * hf * alpha.ln()
            - 0.5 * kf * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * gamma * residual
            - 0.5 * alpha * weight_norm2
            - 0.5 * log_det;
        (
            evidence,
            FitStats {
                effective_params,
                weight_norm2,
                residual,
            },
        )
    }
}

/// Single-target convenience wrapper around [`EvidenceModel`].
pub fn evidence_maximize(features: &DMatrix<f64>, target: &DVector<f64>) -> Result<EvidenceResult> {
    EvidenceModel::new(features).maximize(target)
}

/// Mean per-sample evidence over the columns of `targets`.
pub fn mean_evidence_per_sample(features: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    let model = EvidenceModel::new(features);
    let k = features.nrows() as f64;
    let mut total = 0.0;
    for col in targets.column_iter() {
        total += model.maximize(&col.into_owned())?.evidence / k;
    }
    Ok(total / targets.ncols() as f64)
}

/// `S_lmr`: mean over the four box columns of evidence / K.
pub fn logme_regression_score(set: &FeatureSet) -> Result<f64> {
    let targets = set.box_matrix().ok_or(Error::MissingBoxes)?;
    let violations = set.validate(true);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    mean_evidence_per_sample(&set.feature_matrix(), &targets)
}

/// Classification variant: labels one-hot encoded into `C` target columns.
pub fn logme_classification_score(set: &FeatureSet) -> Result<f64> {
    let violations = set.validate(false);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let mut onehot = DMatrix::zeros(set.k, set.class_count);
    for (row, &label) in set.labels.iter().enumerate() {
        onehot[(row, label as usize)] = 1.0;
    }
    mean_evidence_per_sample(&set.feature_matrix(), &onehot)
}
