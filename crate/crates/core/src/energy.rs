//! Label-free energy score.
//!
//! Each feature row is treated as the logits of a classifier over `ĥ`
//! outputs; its free energy is `Ê(x) = −log Σ exp(f̂)`. Lower energy means
//! the sample looks in-distribution to the model, so the score is the mean
//! negative free energy over all samples.

use crate::feature_store::FeatureSet;
use crate::linalg::logsumexp;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyResult {
    pub per_sample_energy: Vec<f64>,
    pub score: f64,
}

/// Free energy of one feature row (max-shifted, finite for finite input).
pub fn free_energy(row: &[f64]) -> f64 {
    -logsumexp(row.iter().copied())
}

/// `S_en = −(1/K) Σ_k Ê(x_k)`, summed in row order.
pub fn energy_score(set: &FeatureSet) -> EnergyResult {
    let mut buf = vec![0.0; set.h];
    let per_sample_energy: Vec<f64> = set
        .rows()
        .map(|row| {
            for (b, &v) in buf.iter_mut().zip(row) {
                *b = v as f64;
            }
            free_energy(&buf)
        })
        .collect();
    let sum: f64 = per_sample_energy.iter().sum();
    let score = -sum / per_sample_energy.len() as f64;
    EnergyResult {
        per_sample_energy,
        score,
    }
}

/// Both sides of `log max softmax(z) = max(z) + E(z)` with `E = −logsumexp`.
///
/// The left side is computed from the explicit softmax vector so the two
/// sides take different numerical paths.
pub fn softmax_energy_identity(logits: &[f64]) -> (f64, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let max_prob = logits
        .iter()
        .map(|&z| (z - max).exp() / denom)
        .fold(0.0, f64::max);
    let lhs = max_prob.ln();
    let rhs = max + free_energy(logits);
    (lhs, rhs)
}
