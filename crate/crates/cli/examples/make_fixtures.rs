//! Regenerates the synthetic stores under `tests/fixtures`.
//!
//! `cargo run -p transferability-cli --example make_fixtures`

use std::path::Path;

use transferability::feature_store::write_feature_set;
use transferability::roi_pool::{
    write_map_bundle, BoxAnnotation, MapBundle, NormalizedBox, SpatialFeatureMap,
};
use transferability::synthetic::{planted_benchmark, PlantedConfig};
use transferability::FeatureSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let config = PlantedConfig {
        models: 3,
        samples: 60,
        dims: 8,
        classes: 3,
        ..PlantedConfig::default()
    };
    let bench = planted_benchmark(0, &config);
    for (i, set) in bench.sets.iter().enumerate() {
        let name = format!("m{}", i + 1);
        let det = FeatureSet {
            model_id: name.clone(),
            dataset_id: "toy".into(),
            ..set.clone()
        };
        write_feature_set(&det, root.join(format!("det/{name}")))?;
        let cls = FeatureSet { boxes: None, ..det };
        write_feature_set(&cls, root.join(format!("cls/{name}")))?;
        println!("{name}: quality {}", bench.quality[i]);
    }

    let maps = (0..2)
        .map(|i| SpatialFeatureMap {
            image_id: format!("img{i}"),
            channels: 4,
            height: 4,
            width: 4,
            data: (0..64).map(|v| ((v * (i + 3)) % 17) as f32 / 4.0).collect(),
            image_height: 64,
            image_width: 64,
        })
        .collect();
    let ann = |img: usize, class_id, cx, cy, w, h| BoxAnnotation {
        image_id: format!("img{img}"),
        class_id,
        bbox: NormalizedBox { cx, cy, w, h },
    };
    let bundle = MapBundle {
        model_id: "m4".into(),
        dataset_id: "toy".into(),
        class_count: Some(2),
        maps,
        annotations: vec![
            ann(1, 0, 0.5, 0.5, 0.5, 0.5),
            ann(0, 1, 0.25, 0.25, 0.5, 0.5),
            ann(0, 0, 0.75, 0.6, 0.4, 0.3),
            ann(1, 1, 0.3, 0.7, 0.2, 0.2),
            ann(0, 1, 0.5, 0.5, 1.0, 1.0),
        ],
    };
    write_map_bundle(&bundle, root.join("bundle"))?;
    Ok(())
}
