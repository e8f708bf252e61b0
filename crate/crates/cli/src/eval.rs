use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use transferability::metrics::evaluate_benchmark_with;
use transferability::{BenchmarkTable, Ranking};

use crate::report::read_fused;
use crate::Failure;

fn parse_report_arg(arg: &str) -> Result<(&str, &Path), Failure> {
    match arg.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => Ok((id, Path::new(path))),
        _ => Err(Failure::config(format!(
            "--report expects dataset_id=path, got {arg:?}"
        ))),
    }
}

pub fn run(gt: &Path, reports: &[String], ks: &[usize], out: Option<&Path>) -> Result<(), Failure> {
    let table = BenchmarkTable::from_csv_path(gt).map_err(|e| Failure::input(e.to_string()))?;
    let m = table.model_ids.len();
    if let Some(k) = ks.iter().find(|&&k| k == 0 || k > m) {
        return Err(Failure::config(format!("--k {k} outside [1, {m}]")));
    }

    let mut rankings = BTreeMap::new();
    let mut columns = Vec::new();
    for arg in reports {
        let (dataset, path) = parse_report_arg(arg)?;
        let d = table.dataset_index(dataset).ok_or_else(|| {
            Failure::input(format!("dataset {dataset:?} is not in {}", gt.display()))
        })?;
        if rankings.contains_key(dataset) {
            return Err(Failure::config(format!("dataset {dataset:?} given twice")));
        }
        let fused = read_fused(path).map_err(Failure::input)?;
        rankings.insert(dataset.to_string(), Ranking::from_scores(fused));
        columns.push(d);
    }

    // Only the reported datasets are evaluated, in argument order.
    let subset = BenchmarkTable::new(
        table.model_ids.clone(),
        columns
            .iter()
            .map(|&d| table.dataset_ids[d].clone())
            .collect(),
        table
            .accuracy
            .iter()
            .map(|row| columns.iter().map(|&d| row[d]).collect())
            .collect(),
    )
    .map_err(|e| Failure::input(e.to_string()))?;
    let eval = evaluate_benchmark_with(&subset, &rankings, ks)
        .map_err(|e| Failure::input(e.to_string()))?;

    let mut text = String::from("dataset\ttau\ttau_w");
    for k in ks {
        write!(text, "\ttop{k}").unwrap();
    }
    text.push('\n');
    for (i, d) in eval.dataset_ids.iter().enumerate() {
        write!(
            text,
            "{d}\t{}\t{}",
            eval.per_dataset_tau[i], eval.per_dataset_tau_weighted[i]
        )
        .unwrap();
        for k in ks {
            write!(text, "\t{}", u8::from(eval.per_dataset_top_hit[k][i])).unwrap();
        }
        text.push('\n');
    }
    write!(text, "mean\t{}\t{}", eval.mean_tau, eval.mean_tau_weighted).unwrap();
    for k in ks {
        write!(text, "\t{}", eval.pr_top[k]).unwrap();
    }
    text.push('\n');

    print!("{text}");
    if let Some(path) = out {
        let write = |p: &Path, s: &str| {
            std::fs::write(p, s).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
        };
        write(path, &text)?;
        let doc = json!({
            "datasets": eval.dataset_ids,
            "tau": eval.per_dataset_tau,
            "tau_w": eval.per_dataset_tau_weighted,
            "top_hit": eval.per_dataset_top_hit,
            "pr_top": eval.pr_top,
            "mean_tau": eval.mean_tau,
            "mean_tau_w": eval.mean_tau_weighted,
        });
        let mut json_path = path.as_os_str().to_owned();
        json_path.push(".json");
        let mut s = serde_json::to_string_pretty(&doc).expect("evaluation serializes");
        s.push('\n');
        write(Path::new(&json_path), &s)?;
    }
    Ok(())
}
