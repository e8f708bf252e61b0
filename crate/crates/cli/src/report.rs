//! Rank report: tab-separated text with a fixed field order, plus a JSON copy.
//!
//! ```text
//! # task=detection scores=energy,cls,reg holdout=false
//! model_id  raw_energy  raw_cls  raw_reg  norm_energy  norm_cls  norm_reg  fused  rank
//! ```
//!
//! Records are listed best first. Models sharing a fused value are listed in
//! `# tie` lines after the records. Numbers use the shortest decimal form
//! that reads back to the same f64.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transferability::ScoreKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub model_id: String,
    pub raw: BTreeMap<ScoreKind, f64>,
    pub normalized: BTreeMap<ScoreKind, f64>,
    pub fused: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub task: String,
    pub scores: Vec<ScoreKind>,
    pub holdout: bool,
    pub records: Vec<Record>,
    pub tie_breaks: Vec<Vec<String>>,
}

impl RankReport {
    pub fn to_text(&self) -> String {
        let names: Vec<&str> = self.scores.iter().map(|k| k.name()).collect();
        let mut out = format!(
            "# task={} scores={} holdout={}\n",
            self.task,
            names.join(","),
            self.holdout
        );
        let mut header = vec!["model_id".to_string()];
        header.extend(names.iter().map(|n| format!("raw_{n}")));
        header.extend(names.iter().map(|n| format!("norm_{n}")));
        header.extend(["fused".into(), "rank".into()]);
        out.push_str(&header.join("\t"));
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.model_id);
            for map in [&r.raw, &r.normalized] {
                for k in &self.scores {
                    write!(out, "\t{}", map[k]).unwrap();
                }
            }
            writeln!(out, "\t{}\t{}", r.fused, r.rank).unwrap();
        }
        for group in &self.tie_breaks {
            writeln!(out, "# tie {}", group.join(",")).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `(model_id, fused)` pairs from a text or JSON report.
pub fn read_fused(path: &Path) -> Result<Vec<(String, f64)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let report: RankReport =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(report
            .records
            .into_iter()
            .map(|r| (r.model_id, r.fused))
            .collect());
    }
    parse_text(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_text(text: &str) -> Result<Vec<(String, f64)>, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or("empty report")?;
    let columns: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| format!("report header has no {name} column"))
    };
    let (id_col, fused_col) = (find("model_id")?, find("fused")?);
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != columns.len() {
                return Err(format!(
                    "line {}: {} fields, expected {}",
                    i + 1,
                    fields.len(),
                    columns.len()
                ));
            }
            let fused = fields[fused_col]
                .parse::<f64>()
                .map_err(|_| format!("line {}: bad fused value {:?}", i + 1, fields[fused_col]))?;
            Ok((fields[id_col].to_string(), fused))
        })
        .collect()
}
