//! Min-max normalization of each score across candidate models and
//! equal-weight summation into one transferability value per model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Energy,
    Cls,
    Reg,
    Logme,
    Lmr,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [
        ScoreKind::Energy,
        ScoreKind::Cls,
        ScoreKind::Reg,
        ScoreKind::Logme,
        ScoreKind::Lmr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Energy => "energy",
            ScoreKind::Cls => "cls",
            ScoreKind::Reg => "reg",
            ScoreKind::Logme => "logme",
            ScoreKind::Lmr => "lmr",
        }
    }

    /// Scores that regress box targets.
    pub fn needs_boxes(self) -> bool {
        matches!(self, ScoreKind::Reg | ScoreKind::Lmr)
    }

    /// Scores that consume class labels.
    pub fn needs_labels(self) -> bool {
        matches!(self, ScoreKind::Cls | ScoreKind::Logme)
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown score {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model_id: String,
    pub raw_scores: BTreeMap<ScoreKind, f64>,
    pub normalized_scores: BTreeMap<ScoreKind, f64>,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Best first.
    pub entries: Vec<(String, f64)>,
    /// Groups of models sharing the same fused value, in ranking order.
    pub tie_breaks: Vec<Vec<String>>,
}

impl Ranking {
    /// Orders by descending value, ties by ascending id.
    pub fn from_scores(scores: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut entries: Vec<(String, f64)> = scores.into_iter().collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tie_breaks = Vec::new();
        for group in entries.chunk_by(|a, b| a.1 == b.1) {
            if group.len() > 1 {
                tie_breaks.push(group.iter().map(|(id, _)| id.clone()).collect());
            }
        }
        Ranking {
            entries,
            tie_breaks,
        }
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    /// 1-based rank of a model.
    pub fn rank_of(&self, model_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|(id, _)| id == model_id)
            .map(|p| p + 1)
    }
}

/// `(x − min) / (max − min)`; a constant column maps to all zeros.
pub fn normalize_across_models(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range.is_nan() || range <= 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter()
        .map(|&x| ((x - min) / range).clamp(0.0, 1.0))
        .collect()
}

/// Normalizes each enabled score column, sums per model, and ranks.
///
/// `per_model` lists `(model_id, raw scores)`; every model must carry every
/// enabled score. Reports keep the input order.
pub fn fuse_and_rank(
    per_model: &[(String, BTreeMap<ScoreKind, f64>)],
    enabled: &[ScoreKind],
) -> Result<(Vec<ScoreReport>, Ranking)> {
    let mut enabled = enabled.to_vec();
    enabled.sort();
    enabled.dedup();

    let mut reports: Vec<ScoreReport> = per_model
        .iter()
        .map(|(id, _)| ScoreReport {
            model_id: id.clone(),
            raw_scores: BTreeMap::new(),
            normalized_scores: BTreeMap::new(),
            fused: 0.0,
        })
        .collect();

    for &kind in &enabled {
        let column = per_model
            .iter()
            .map(|(id, scores)| match scores.get(&kind) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(v) => Err(Error::InvalidArgument(format!(
                    "model {id:?} has non-finite {kind} score {v}"
                ))),
                None => Err(Error::MissingScore {
                    model: id.clone(),
                    score: kind.to_string(),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        let normalized = normalize_across_models(&column);
        for ((report, raw), norm) in reports.iter_mut().zip(column).zip(normalized) {
            report.raw_scores.insert(kind, raw);
            report.normalized_scores.insert(kind, norm);
        }
    }
    for report in &mut reports {
        // Fixed summation order (ScoreKind order) for reproducibility.
        report.fused = report.normalized_scores.values().sum();
    }

    let ranking = Ranking::from_scores(reports.iter().map(|r| (r.model_id.clone(), r.fused)));
    Ok((reports, ranking))
}
