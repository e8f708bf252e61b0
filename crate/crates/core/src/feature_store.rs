//! Feature sets and their on-disk directory format.
//!
//! A store is a directory holding `manifest.json` plus raw little-endian,
//! row-major tensors without header or padding:
//!
//! | file           | dtype | shape    |
//! |----------------|-------|----------|
//! | `features.f32` | f32   | `[k, h]` |
//! | `labels.i32`   | i32   | `[k]`    |
//! | `boxes.f32`    | f32   | `[k, 4]` (optional) |
//!
//! Each tensor is covered by an FNV-1a 64-bit checksum of its raw bytes,
//! stored as 16 lowercase hex digits in the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.f32";
pub const LABELS_FILE: &str = "labels.i32";
pub const BOXES_FILE: &str = "boxes.f32";

/// Features one candidate model extracted from one target dataset.
///
/// `features` is row-major `k × h`; `boxes`, when present, is row-major
/// `k × 4` holding normalized `(cx, cy, w, h)`. Construction does not check
/// invariants; call [`FeatureSet::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub model_id: String,
    pub dataset_id: String,
    pub k: usize,
    pub h: usize,
    pub class_count: usize,
    pub features: Vec<f32>,
    pub labels: Vec<i32>,
    pub boxes: Option<Vec<f32>>,
}

/// One broken invariant of a [`FeatureSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewSamples {
        k: usize,
    },
    ZeroDimension,
    ZeroClasses,
    FeatureLength {
        expected: usize,
        actual: usize,
    },
    NonFiniteFeature {
        row: usize,
        col: usize,
    },
    LabelCount {
        expected: usize,
        actual: usize,
    },
    LabelOutOfRange {
        row: usize,
        label: i32,
        class_count: usize,
    },
    BoxLength {
        expected: usize,
        actual: usize,
    },
    BoxOutOfRange {
        row: usize,
        col: usize,
        value: f32,
    },
    BoxesRequired,
    TooFewClasses {
        class_count: usize,
    },
    EmptyClass {
        class: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewSamples { k } => write!(f, "need at least 2 samples, have {k}"),
            Violation::ZeroDimension => write!(f, "feature dimension is 0"),
            Violation::ZeroClasses => write!(f, "class count is 0"),
            Violation::FeatureLength { expected, actual } => {
                write!(f, "features hold {actual} values, expected {expected}")
            }
            Violation::NonFiniteFeature { row, col } => {
                write!(f, "non-finite feature at row {row}, column {col}")
            }
            Violation::LabelCount { expected, actual } => {
                write!(f, "{actual} labels for {expected} samples")
            }
            Violation::LabelOutOfRange {
                row,
                label,
                class_count,
            } => write!(f, "label {label} at row {row} outside [0, {class_count})"),
            Violation::BoxLength { expected, actual } => {
                write!(f, "boxes hold {actual} values, expected {expected}")
            }
            Violation::BoxOutOfRange { row, col, value } => {
                write!(
                    f,
                    "box value {value} at row {row}, column {col} outside [0, 1]"
                )
            }
            Violation::BoxesRequired => write!(f, "box targets required but absent"),
            Violation::TooFewClasses { class_count } => {
                write!(
                    f,
                    "classification needs at least 2 classes, have {class_count}"
                )
            }
            Violation::EmptyClass { class } => write!(f, "class {class} has no samples"),
        }
    }
}

impl FeatureSet {
    pub fn new(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        h: usize,
        class_count: usize,
        features: Vec<f32>,
        labels: Vec<i32>,
        boxes: Option<Vec<f32>>,
    ) -> Self {
        let k = labels.len();
        FeatureSet {
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            k,
            h,
            class_count,
            features,
            labels,
            boxes,
        }
    }

    pub fn has_boxes(&self) -> bool {
        self.boxes.is_some()
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.features[k * self.h..(k + 1) * self.h]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.h.max(1))
    }

    /// Features widened to `f64`.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.k, self.h, self.features.iter().map(|&v| v as f64))
    }

    /// Box targets widened to `f64`, `k × 4`.
    pub fn box_matrix(&self) -> Option<DMatrix<f64>> {
        self.boxes
            .as_ref()
            .map(|b| DMatrix::from_row_iterator(self.k, 4, b.iter().map(|&v| v as f64)))
    }

    /// Number of samples per class; labels outside `[0, C)` are ignored.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            if l >= 0 && (l as usize) < self.class_count {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    /// Structural invariants. An empty result means the set can be stored
    /// and scored by the label-free and regression scores.
    pub fn validate(&self, require_boxes: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.k < 2 {
            out.push(Violation::TooFewSamples { k: self.k });
        }
        if self.h == 0 {
            out.push(Violation::ZeroDimension);
        }
        if self.class_count == 0 {
            out.push(Violation::ZeroClasses);
        }
        let expected = self.k * self.h;
        if self.features.len() != expected {
            out.push(Violation::FeatureLength {
                expected,
                actual: self.features.len(),
            });
        } else if self.h > 0 {
            for (row, values) in self.features.chunks(self.h).enumerate() {
                for (col, v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        out.push(Violation::NonFiniteFeature { row, col });
                    }
                }
            }
        }
        if self.labels.len() != self.k {
            out.push(Violation::LabelCount {
                expected: self.k,
                actual: self.labels.len(),
            });
        }
        for (row, &label) in self.labels.iter().enumerate() {
            if label < 0 || label as usize >= self.class_count {
                out.push(Violation::LabelOutOfRange {
                    row,
                    label,
                    class_count: self.class_count,
                });
            }
        }
        match &self.boxes {
            Some(b) if b.len() != self.k * 4 => out.push(Violation::BoxLength {
                expected: self.k * 4,
                actual: b.len(),
            }),
            Some(b) => {
                for (i, &v) in b.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        out.push(Violation::BoxOutOfRange {
                            row: i / 4,
                            col: i % 4,
                            value: v,
                        });
                    }
                }
            }
            None if require_boxes => out.push(Violation::BoxesRequired),
            None => {}
        }
        out
    }

    /// Extra conditions for the classification scores: at least two classes
    /// and every class present.
    pub fn classification_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.class_count < 2 {
            out.push(Violation::TooFewClasses {
                class_count: self.class_count,
            });
        }
        for (class, &n) in self.class_counts().iter().enumerate() {
            if n == 0 {
                out.push(Violation::EmptyClass { class });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl TensorEntry {
    pub fn byte_len(&self) -> u64 {
        self.shape.iter().product::<usize>() as u64 * 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub model_id: String,
    pub dataset_id: String,
    pub k: usize,
    pub h: usize,
    pub c: usize,
    pub has_boxes: bool,
    pub files: Vec<TensorEntry>,
    pub checksums: BTreeMap<String, String>,
}

impl Manifest {
    fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.files.iter().find(|e| e.name == name)
    }

    /// The tensors this manifest must describe, with the shapes implied by
    /// `k`, `h` and `has_boxes`.
    fn expected_entries(&self) -> Vec<TensorEntry> {
        let mut v = vec![
            TensorEntry {
                name: FEATURES_FILE.into(),
                dtype: DType::F32,
                shape: vec![self.k, self.h],
            },
            TensorEntry {
                name: LABELS_FILE.into(),
                dtype: DType::I32,
                shape: vec![self.k],
            },
        ];
        if self.has_boxes {
            v.push(TensorEntry {
                name: BOXES_FILE.into(),
                dtype: DType::F32,
                shape: vec![self.k, 4],
            });
        }
        v
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

fn checksum_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

pub(crate) fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn i32_bytes(values: &[i32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn f32_from_bytes(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn i32_from_bytes(bytes: &[u8]) -> Vec<i32> {
    bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes `set` into `dir`, creating it if needed. Nothing is written when
/// the set violates an invariant. The manifest is written last.
pub fn write_feature_set(set: &FeatureSet, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let violations = set.validate(false);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }

    let mut tensors = vec![
        (FEATURES_FILE, f32_bytes(&set.features)),
        (LABELS_FILE, i32_bytes(&set.labels)),
    ];
    if let Some(b) = &set.boxes {
        tensors.push((BOXES_FILE, f32_bytes(b)));
    }

    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        model_id: set.model_id.clone(),
        dataset_id: set.dataset_id.clone(),
        k: set.k,
        h: set.h,
        c: set.class_count,
        has_boxes: set.has_boxes(),
        files: Vec::new(),
        checksums: BTreeMap::new(),
    };
    manifest.files = manifest.expected_entries();

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in &tensors {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        manifest
            .checksums
            .insert(name.to_string(), checksum_hex(bytes));
    }

    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads and parses `manifest.json` without touching the tensors.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::ManifestMissing {
                path: dir.as_ref().to_path_buf(),
            })
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path,
            version: manifest.format_version,
        });
    }
    Ok(manifest)
}

/// Reads a store written by [`write_feature_set`], checking declared shapes
/// against file sizes and every checksum. Invariants are not validated.
pub fn read_feature_set(dir: impl AsRef<Path>) -> Result<FeatureSet> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);

    let mut tensors: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for expected in manifest.expected_entries() {
        let declared = manifest
            .entry(&expected.name)
            .ok_or_else(|| Error::Manifest {
                path: manifest_path.clone(),
                message: format!("no entry for {}", expected.name),
            })?;
        if declared != &expected {
            return Err(Error::Manifest {
                path: manifest_path.clone(),
                message: format!(
                    "{} declared as {:?} {:?}, expected {:?} {:?}",
                    expected.name, declared.dtype, declared.shape, expected.dtype, expected.shape
                ),
            });
        }

        let path = dir.join(&expected.name);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::TensorMissing { path })
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        if bytes.len() as u64 != expected.byte_len() {
            return Err(Error::ShapeMismatch {
                path,
                expected: expected.byte_len(),
                actual: bytes.len() as u64,
            });
        }
        let stored = manifest
            .checksums
            .get(&expected.name)
            .ok_or_else(|| Error::Manifest {
                path: manifest_path.clone(),
                message: format!("no checksum for {}", expected.name),
            })?;
        let actual = checksum_hex(&bytes);
        if !stored.eq_ignore_ascii_case(&actual) {
            return Err(Error::ChecksumMismatch {
                path,
                expected: stored.clone(),
                actual,
            });
        }
        tensors.insert(expected.name, bytes);
    }

    Ok(FeatureSet {
        model_id: manifest.model_id,
        dataset_id: manifest.dataset_id,
        k: manifest.k,
        h: manifest.h,
        class_count: manifest.c,
        features: f32_from_bytes(&tensors[FEATURES_FILE]),
        labels: i32_from_bytes(&tensors[LABELS_FILE]),
        boxes: tensors.get(BOXES_FILE).map(|b| f32_from_bytes(b)),
    })
}

/// Free-function form of [`FeatureSet::validate`].
pub fn validate_feature_set(set: &FeatureSet, require_boxes: bool) -> Vec<Violation> {
    set.validate(require_boxes)
}
