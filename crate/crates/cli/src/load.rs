use std::path::Path;

use transferability::feature_store::{read_feature_set, read_manifest, Manifest};
use transferability::roi_pool::{is_map_bundle, read_map_bundle, MapBundle};
use transferability::{Error, FeatureSet, Result};

/// What a feature directory holds on disk.
pub enum Source {
    Store(Manifest),
    Bundle(MapBundle),
}

/// Reads a feature store, or pools a detection map bundle into one.
pub fn load(dir: &Path) -> Result<(FeatureSet, Source)> {
    if is_map_bundle(dir) {
        let bundle = read_map_bundle(dir)?;
        let set = bundle.to_feature_set()?;
        Ok((set, Source::Bundle(bundle)))
    } else {
        let manifest = read_manifest(dir)?;
        let set = read_feature_set(dir)?;
        Ok((set, Source::Store(manifest)))
    }
}

/// Error text that names `dir` exactly once.
pub fn describe(dir: &Path, e: &Error) -> String {
    match e.path() {
        Some(p) if p.starts_with(dir) => e.to_string(),
        _ => format!("{}: {e}", dir.display()),
    }
}
