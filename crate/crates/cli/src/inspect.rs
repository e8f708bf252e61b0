use std::path::Path;

use crate::load::{describe, load, Source};
use crate::Failure;

pub fn run(dir: &Path) -> Result<(), Failure> {
    let name = dir.display();
    let (set, source) = load(dir).map_err(|e| Failure::input(describe(dir, &e)))?;

    println!("path\t{name}");
    match &source {
        Source::Store(m) => {
            println!("kind\tfeature store");
            println!("format_version\t{}", m.format_version);
            println!("model_id\t{}", m.model_id);
            println!("dataset_id\t{}", m.dataset_id);
            for entry in &m.files {
                let shape: Vec<String> = entry.shape.iter().map(ToString::to_string).collect();
                let checksum = m.checksums.get(&entry.name).map_or("-", String::as_str);
                println!(
                    "file\t{}\t{:?}\t[{}]\t{checksum}",
                    entry.name,
                    entry.dtype,
                    shape.join(", ")
                );
            }
        }
        Source::Bundle(b) => {
            println!("kind\tmap bundle");
            println!("model_id\t{}", b.model_id);
            println!("dataset_id\t{}", b.dataset_id);
            println!("images\t{}", b.maps.len());
            println!("annotations\t{}", b.annotations.len());
        }
    }
    println!("K\t{}", set.k);
    println!("h\t{}", set.h);
    println!("C\t{}", set.class_count);
    let counts: Vec<String> = set
        .class_counts()
        .iter()
        .enumerate()
        .map(|(c, n)| format!("{c}:{n}"))
        .collect();
    println!("class_counts\t{}", counts.join(" "));
    println!("has_boxes\t{}", set.has_boxes());

    let violations = set.validate(false);
    for v in &violations {
        println!("violation\t{v}");
    }
    if !violations.is_empty() {
        println!("invalid");
        return Err(Failure::input(format!(
            "{name}: {} violation(s)",
            violations.len()
        )));
    }
    for note in set.classification_violations() {
        println!("note\t{note} (classification scores unavailable)");
    }
    println!("valid");
    Ok(())
}
