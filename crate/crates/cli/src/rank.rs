use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use transferability::energy::energy_score;
use transferability::fusion::fuse_and_rank;
use transferability::lda::lda_score;
use transferability::logme::{logme_classification_score, logme_regression_score};
use transferability::svd_reg::regression_score;
use transferability::{FeatureSet, ScoreKind};

use crate::load::{describe, load};
use crate::report::{RankReport, Record};
use crate::{Failure, Task};

fn parse_scores(task: Task, names: Option<Vec<String>>) -> Result<Vec<ScoreKind>, Failure> {
    let Some(names) = names else {
        return Ok(task.default_scores());
    };
    let mut kinds = Vec::new();
    for name in names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
        let kind: ScoreKind = name
            .parse()
            .map_err(|e: transferability::Error| Failure::config(e.to_string()))?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(Failure::config("no scores selected"));
    }
    if task == Task::Classification {
        if let Some(k) = kinds.iter().find(|k| k.needs_boxes()) {
            return Err(Failure::config(format!(
                "score {k} is only available for detection"
            )));
        }
    }
    kinds.sort();
    Ok(kinds)
}

fn compute(set: &FeatureSet, kind: ScoreKind, holdout: bool) -> transferability::Result<f64> {
    Ok(match kind {
        ScoreKind::Energy => energy_score(set).score,
        ScoreKind::Cls => lda_score(set)?.score,
        ScoreKind::Reg => regression_score(set, holdout)?.score,
        ScoreKind::Logme => logme_classification_score(set)?,
        ScoreKind::Lmr => logme_regression_score(set)?,
    })
}

/// Loads and scores one directory.
fn score_dir(
    dir: &Path,
    kinds: &[ScoreKind],
    holdout: bool,
) -> Result<(FeatureSet, BTreeMap<ScoreKind, f64>), Failure> {
    let name = dir.display();
    let (set, _) = load(dir).map_err(|e| Failure::input(describe(dir, &e)))?;

    let needs_boxes = kinds.iter().any(|k| k.needs_boxes());
    if needs_boxes && !set.has_boxes() {
        return Err(Failure::config(format!(
            "{name}: scores {} need box targets, but the store has none",
            kinds
                .iter()
                .filter(|k| k.needs_boxes())
                .map(|k| k.name())
                .collect::<Vec<_>>()
                .join(",")
        )));
    }
    let mut violations = set.validate(needs_boxes);
    if kinds.iter().any(|k| k.needs_labels()) {
        violations.extend(set.classification_violations());
    }
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Failure::input(format!("{name}: {}", list.join("; "))));
    }

    let mut scores = BTreeMap::new();
    for &kind in kinds {
        let v = compute(&set, kind, holdout)
            .map_err(|e| Failure::input(format!("{name}: {kind}: {e}")))?;
        scores.insert(kind, v);
    }
    Ok((set, scores))
}

/// Record ids are model ids; when every store comes from the same model
/// (ranking target datasets instead), dataset ids are used.
fn record_ids(sets: &[&FeatureSet], dirs: &[PathBuf]) -> Result<Vec<String>, Failure> {
    let unique = |ids: &[String]| ids.iter().collect::<HashSet<_>>().len() == ids.len();
    let models: Vec<String> = sets.iter().map(|s| s.model_id.clone()).collect();
    if unique(&models) {
        return Ok(models);
    }
    let datasets: Vec<String> = sets.iter().map(|s| s.dataset_id.clone()).collect();
    if models.iter().all(|m| *m == models[0]) && unique(&datasets) {
        return Ok(datasets);
    }
    let mut seen = HashSet::new();
    let (i, _) = models
        .iter()
        .enumerate()
        .find(|(_, m)| !seen.insert(*m))
        .expect("a duplicate exists");
    Err(Failure::input(format!(
        "{}: model id {:?} appears more than once",
        dirs[i].display(),
        models[i]
    )))
}

pub fn run(
    task: Task,
    scores: Option<Vec<String>>,
    dirs: &[PathBuf],
    holdout: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let kinds = parse_scores(task, scores)?;

    // Scored in parallel; the first failure in argument order wins.
    let results: Vec<_> = dirs
        .par_iter()
        .map(|d| score_dir(d, &kinds, holdout))
        .collect();
    let scored = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let sets: Vec<&FeatureSet> = scored.iter().map(|(s, _)| s).collect();
    let ids = record_ids(&sets, dirs)?;
    let per_model: Vec<(String, BTreeMap<ScoreKind, f64>)> = ids
        .into_iter()
        .zip(scored.iter().map(|(_, s)| s.clone()))
        .collect();

    let (reports, ranking) =
        fuse_and_rank(&per_model, &kinds).map_err(|e| Failure::input(e.to_string()))?;
    let by_id: BTreeMap<&str, _> = reports.iter().map(|r| (r.model_id.as_str(), r)).collect();
    let records = ranking
        .entries
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let r = by_id[id.as_str()];
            Record {
                model_id: id.clone(),
                raw: r.raw_scores.clone(),
                normalized: r.normalized_scores.clone(),
                fused: r.fused,
                rank: i + 1,
            }
        })
        .collect();
    let report = RankReport {
        task: task.name().into(),
        scores: kinds,
        holdout,
        records,
        tie_breaks: ranking.tie_breaks,
    };

    match out {
        None => print!("{}", report.to_text()),
        Some(path) => {
            let write = |p: &Path, s: String| {
                std::fs::write(p, s).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
            };
            write(path, report.to_text())?;
            let mut json = path.as_os_str().to_owned();
            json.push(".json");
            write(Path::new(&json), report.to_json())?;
        }
    }
    Ok(())
}
