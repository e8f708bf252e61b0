//! Ranking quality against ground-truth fine-tuning accuracy.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Ranking;

/// Ground-truth accuracies, `M` models × `D` datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub model_ids: Vec<String>,
    pub dataset_ids: Vec<String>,
    /// Row per model, column per dataset.
    pub accuracy: Vec<Vec<f64>>,
}

impl BenchmarkTable {
    pub fn new(
        model_ids: Vec<String>,
        dataset_ids: Vec<String>,
        accuracy: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let table = BenchmarkTable {
            model_ids,
            dataset_ids,
            accuracy,
        };
        table.check()?;
        Ok(table)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.model_ids.len() < 2 {
            return bad(format!(
                "need at least 2 models, have {}",
                self.model_ids.len()
            ));
        }
        if self.dataset_ids.is_empty() {
            return bad("no datasets".into());
        }
        if self.accuracy.len() != self.model_ids.len() {
            return bad("accuracy rows do not match model count".into());
        }
        for (id, row) in self.model_ids.iter().zip(&self.accuracy) {
            if row.len() != self.dataset_ids.len() {
                return bad(format!("model {id:?} has {} entries", row.len()));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return bad(format!("model {id:?} has non-finite accuracy {v}"));
            }
        }
        for ids in [&self.model_ids, &self.dataset_ids] {
            let mut seen = HashSet::new();
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return bad(format!("duplicate id {dup:?}"));
            }
        }
        Ok(())
    }

    /// Parses `model_id,<dataset_id>...` followed by one row per model.
    pub fn from_csv_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.get(0) != Some("model_id") {
            return Err(parse_err(1, "header must start with model_id".into()));
        }
        let dataset_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

        let mut model_ids = Vec::new();
        let mut accuracy = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            let mut fields = record.iter();
            let id = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| parse_err(line, format!("not a number: {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            model_ids.push(id);
            accuracy.push(row);
        }
        BenchmarkTable::new(model_ids, dataset_ids, accuracy)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, path)
    }

    pub fn column(&self, dataset: usize) -> Vec<f64> {
        self.accuracy.iter().map(|row| row[dataset]).collect()
    }

    pub fn dataset_index(&self, id: &str) -> Option<usize> {
        self.dataset_ids.iter().position(|d| d == id)
    }

    /// Models attaining the maximum accuracy on a dataset.
    pub fn best_models(&self, dataset: usize) -> Vec<&str> {
        let col = self.column(dataset);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.model_ids
            .iter()
            .zip(col)
            .filter(|(_, v)| *v == max)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Datasets become rows; used to rank target datasets for one model.
    pub fn transposed(&self) -> Result<Self> {
        let accuracy = (0..self.dataset_ids.len())
            .map(|d| self.column(d))
            .collect();
        BenchmarkTable::new(self.dataset_ids.clone(), self.model_ids.clone(), accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEvaluation {
    pub dataset_ids: Vec<String>,
    pub per_dataset_tau: Vec<f64>,
    pub per_dataset_tau_weighted: Vec<f64>,
    /// For each k, whether the ground-truth best model was in the top k.
    pub per_dataset_top_hit: BTreeMap<usize, Vec<bool>>,
    pub pr_top: BTreeMap<usize, f64>,
    pub mean_tau: f64,
    pub mean_tau_weighted: f64,
}

fn sgn(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn check_pair(gt: &[f64], pred: &[f64]) {
    assert_eq!(
        gt.len(),
        pred.len(),
        "ground truth and prediction lengths differ"
    );
    assert!(gt.len() >= 2, "need at least 2 items");
    assert!(
        gt.iter().chain(pred).all(|v| !v.is_nan()),
        "NaN in rank correlation input"
    );
}

/// Kendall tau with tied pairs contributing zero:
/// `τ = (2 / (M(M−1))) Σ_{i<j} sgn(G_i − G_j) sgn(T_i − T_j)`.
///
/// Counts discordant pairs by merge sort, `O(M log M)`.
pub fn kendall_tau(gt: &[f64], pred: &[f64]) -> f64 {
    check_pair(gt, pred);
    let n = gt.len();
    let total_pairs = (n * (n - 1) / 2) as i64;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| gt[a].total_cmp(&gt[b]).then(pred[a].total_cmp(&pred[b])));

    // Pairs tied in gt, and tied in both.
    let mut tied_gt = 0i64;
    let mut tied_both = 0i64;
    for run in idx.chunk_by(|&a, &b| gt[a] == gt[b]) {
        let t = run.len() as i64;
        tied_gt += t * (t - 1) / 2;
        for joint in run.chunk_by(|&a, &b| pred[a] == pred[b]) {
            let t = joint.len() as i64;
            tied_both += t * (t - 1) / 2;
        }
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
    let swaps = merge_count(&mut ys);

    let mut tied_pred = 0i64;
    for run in ys.chunk_by(|a, b| a == b) {
        let t = run.len() as i64;
        tied_pred += t * (t - 1) / 2;
    }

    let s = total_pairs - tied_gt - tied_pred + tied_both - 2 * swaps;
    s as f64 / total_pairs as f64
}

/// Sorts ascending, returning the number of strictly inverted pairs.
fn merge_count(v: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as i64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Per-item hyperbolic weight `1/(r+1)` with `r` the zero-based position in
/// descending ground-truth order; tied items share the mean weight of the
/// positions their group occupies.
pub fn hyperbolic_weights(gt: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..gt.len()).collect();
    idx.sort_by(|&a, &b| gt[b].total_cmp(&gt[a]));
    let mut weights = vec![0.0; gt.len()];
    let mut pos = 0;
    for group in idx.chunk_by(|&a, &b| gt[a] == gt[b]) {
        let mean = (pos..pos + group.len())
            .map(|r| 1.0 / (r as f64 + 1.0))
            .sum::<f64>()
            / group.len() as f64;
        for &i in group {
            weights[i] = mean;
        }
        pos += group.len();
    }
    weights
}

/// Weighted Kendall tau with additive hyperbolic weights
/// `w_ij = 1/(r_i+1) + 1/(r_j+1)` ranked by ground truth:
///
/// `τ_w = Σ w_ij s^G_ij s^T_ij / sqrt(Σ w_ij |s^G_ij| · Σ w_ij |s^T_ij|)`
///
/// Without ties the denominator is `Σ w_ij`. A prediction that orders the
/// items exactly as the ground truth (ties included) scores 1. Returns 0 if
/// either side is constant.
pub fn weighted_kendall_tau(gt: &[f64], pred: &[f64]) -> f64 {
    check_pair(gt, pred);
    let h = hyperbolic_weights(gt);
    let n = gt.len();
    let (mut num, mut gt_norm, mut pred_norm) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let w = h[i] + h[j];
            let sg = sgn(gt[i] - gt[j]);
            let sp = sgn(pred[i] - pred[j]);
            num += w * (sg * sp) as f64;
            gt_norm += w * sg.abs() as f64;
            pred_norm += w * sp.abs() as f64;
        }
    }
    let denom = (gt_norm * pred_norm).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        num / denom
    }
}

/// Whether any ground-truth best model of `dataset` is among the first `k`
/// entries of `ranking`.
fn top_k_hit(table: &BenchmarkTable, dataset: usize, ranking: &Ranking, k: usize) -> bool {
    let best = table.best_models(dataset);
    ranking.model_ids().take(k).any(|id| best.contains(&id))
}

fn check_k(table: &BenchmarkTable, k: usize) -> Result<()> {
    if k == 0 || k > table.model_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside [1, {}]",
            table.model_ids.len()
        )));
    }
    Ok(())
}

/// Fraction of datasets whose ground-truth best model (any, under ties)
/// appears in the first `k` predicted entries. `rankings` follows the
/// table's dataset order.
pub fn pr_topk(table: &BenchmarkTable, rankings: &[Ranking], k: usize) -> Result<f64> {
    check_k(table, k)?;
    if rankings.len() != table.dataset_ids.len() {
        return Err(Error::IdMismatch(format!(
            "{} rankings for {} datasets",
            rankings.len(),
            table.dataset_ids.len()
        )));
    }
    for r in rankings {
        check_ids(table, r)?;
    }
    let hits = rankings
        .iter()
        .enumerate()
        .filter(|(d, r)| top_k_hit(table, *d, r, k))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

fn check_ids(table: &BenchmarkTable, ranking: &Ranking) -> Result<()> {
    let predicted: HashSet<&str> = ranking.model_ids().collect();
    if predicted.len() != ranking.entries.len() {
        return Err(Error::IdMismatch("ranking lists a model twice".into()));
    }
    if let Some(missing) = table
        .model_ids
        .iter()
        .find(|id| !predicted.contains(id.as_str()))
    {
        return Err(Error::IdMismatch(format!(
            "model {missing:?} missing from ranking"
        )));
    }
    let known: HashSet<&str> = table.model_ids.iter().map(String::as_str).collect();
    if let Some(extra) = ranking.model_ids().find(|id| !known.contains(id)) {
        return Err(Error::IdMismatch(format!(
            "model {extra:?} not in ground-truth table"
        )));
    }
    Ok(())
}

/// Per-dataset taus against the fused values plus Pr(top-k) for each `k`.
/// `rankings` is keyed by dataset id and must cover every table dataset.
pub fn evaluate_benchmark_with(
    table: &BenchmarkTable,
    rankings: &BTreeMap<String, Ranking>,
    ks: &[usize],
) -> Result<RankingEvaluation> {
    for &k in ks {
        check_k(table, k)?;
    }
    if let Some(extra) = rankings.keys().find(|d| table.dataset_index(d).is_none()) {
        return Err(Error::IdMismatch(format!(
            "dataset {extra:?} not in ground-truth table"
        )));
    }

    let mut eval = RankingEvaluation {
        dataset_ids: table.dataset_ids.clone(),
        per_dataset_tau: Vec::new(),
        per_dataset_tau_weighted: Vec::new(),
        per_dataset_top_hit: ks.iter().map(|&k| (k, Vec::new())).collect(),
        pr_top: BTreeMap::new(),
        mean_tau: 0.0,
        mean_tau_weighted: 0.0,
    };
    for (d, dataset) in table.dataset_ids.iter().enumerate() {
        let ranking = rankings
            .get(dataset)
            .ok_or_else(|| Error::IdMismatch(format!("no ranking for dataset {dataset:?}")))?;
        check_ids(table, ranking)?;
        let fused: BTreeMap<&str, f64> = ranking
            .entries
            .iter()
            .map(|(id, t)| (id.as_str(), *t))
            .collect();
        let pred: Vec<f64> = table
            .model_ids
            .iter()
            .map(|id| fused[id.as_str()])
            .collect();
        let gt = table.column(d);
        eval.per_dataset_tau.push(kendall_tau(&gt, &pred));
        eval.per_dataset_tau_weighted
            .push(weighted_kendall_tau(&gt, &pred));
        for &k in ks {
            let hit = top_k_hit(table, d, ranking, k);
            eval.per_dataset_top_hit
                .get_mut(&k)
                .expect("k registered")
                .push(hit);
        }
    }

    let n = table.dataset_ids.len() as f64;
    eval.mean_tau = eval.per_dataset_tau.iter().sum::<f64>() / n;
    eval.mean_tau_weighted = eval.per_dataset_tau_weighted.iter().sum::<f64>() / n;
    for (&k, hits) in &eval.per_dataset_top_hit {
        eval.pr_top
            .insert(k, hits.iter().filter(|&&h| h).count() as f64 / n);
    }
    Ok(eval)
}

/// [`evaluate_benchmark_with`] for `k ∈ {1, 2, 3}` (clipped to `M`).
pub fn evaluate_benchmark(
    table: &BenchmarkTable,
    rankings: &BTreeMap<String, Ranking>,
) -> Result<RankingEvaluation> {
    let ks: Vec<usize> = (1..=3).filter(|&k| k <= table.model_ids.len()).collect();
    evaluate_benchmark_with(table, rankings, &ks)
}

/// Rankings that reproduce the table itself (or its negation), one per dataset.
pub fn oracle_rankings(table: &BenchmarkTable, reversed: bool) -> BTreeMap<String, Ranking> {
    let sign = if reversed { -1.0 } else { 1.0 };
    table
        .dataset_ids
        .iter()
        .enumerate()
        .map(|(d, id)| {
            let scores = table
                .model_ids
                .iter()
                .cloned()
                .zip(table.column(d).into_iter().map(|v| sign * v));
            (id.clone(), Ranking::from_scores(scores))
        })
        .collect()
}
