//! Box-aligned detection features.
//!
//! Every ground-truth box is mapped onto its image's spatial feature map and
//! the covered cells are averaged per channel, giving one `C_feat`-dim row
//! per box. Rows are concatenated in `(image_id, annotation order)` order.
//!
//! On disk a map bundle is a directory with `maps.json`, one
//! `feat_<image_id>.f32` tensor (`[C_feat, H, W]`, little-endian f32) per
//! image, and `annotations.txt` with one `image_id class_id cx cy w h` line
//! per box.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{f32_bytes, f32_from_bytes, fnv1a64, FeatureSet};

pub const MAPS_MANIFEST_FILE: &str = "maps.json";
pub const ANNOTATIONS_FILE: &str = "annotations.txt";
pub const MAPS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFeatureMap {
    pub image_id: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-major `channels × height × width`.
    pub data: Vec<f32>,
    pub image_height: u32,
    pub image_width: u32,
}

impl SpatialFeatureMap {
    pub fn at(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }

    fn check(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map {:?} has an empty dimension",
                self.image_id
            )));
        }
        if self.data.len() != self.channels * self.height * self.width {
            return Err(Error::InvalidArgument(format!(
                "feature map {:?} holds {} values for shape [{}, {}, {}]",
                self.image_id,
                self.data.len(),
                self.channels,
                self.height,
                self.width
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature map {:?} has non-finite values",
                self.image_id
            )));
        }
        Ok(())
    }
}

/// Normalized `(cx, cy, w, h)` relative to the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormalizedBox {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.cx)
            && (0.0..=1.0).contains(&self.cy)
            && self.w > 0.0
            && self.w <= 1.0
            && self.h > 0.0
            && self.h <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxAnnotation {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: NormalizedBox,
}

/// Half-open cell range `[lo, hi)` covering `[center − extent/2, center + extent/2]`
/// on a grid of `cells`, never empty.
fn cell_span(center: f64, extent: f64, cells: usize) -> (usize, usize) {
    let lo = ((center - extent / 2.0).clamp(0.0, 1.0) * cells as f64).floor() as usize;
    let hi = ((center + extent / 2.0).clamp(0.0, 1.0) * cells as f64).ceil() as usize;
    let lo = lo.min(cells - 1);
    let hi = hi.clamp(lo + 1, cells);
    (lo, hi)
}

/// Channel-wise mean of the map cells covered by `bbox`.
pub fn pool_box(map: &SpatialFeatureMap, bbox: &NormalizedBox) -> Vec<f64> {
    let (r0, r1) = cell_span(bbox.cy, bbox.h, map.height);
    let (c0, c1) = cell_span(bbox.cx, bbox.w, map.width);
    let n = ((r1 - r0) * (c1 - c0)) as f64;
    (0..map.channels)
        .map(|c| {
            let mut sum = 0.0;
            for row in r0..r1 {
                let start = (c * map.height + row) * map.width;
                sum += map.data[start + c0..start + c1]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
            sum / n
        })
        .collect()
}

/// Pools every annotation into a detection [`FeatureSet`].
///
/// `class_count` defaults to one more than the largest class id.
pub fn construct_detection_features(
    maps: &[SpatialFeatureMap],
    annotations: &[BoxAnnotation],
    model_id: &str,
    dataset_id: &str,
    class_count: Option<usize>,
) -> Result<FeatureSet> {
    if annotations.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut by_id: BTreeMap<&str, &SpatialFeatureMap> = BTreeMap::new();
    let channels = maps.first().map(|m| m.channels).unwrap_or(0);
    for map in maps {
        map.check()?;
        if map.channels != channels {
            return Err(Error::InconsistentChannels {
                image_id: map.image_id.clone(),
                expected: channels,
                found: map.channels,
            });
        }
        if by_id.insert(map.image_id.as_str(), map).is_some() {
            return Err(Error::InvalidArgument(format!(
                "two feature maps for image {:?}",
                map.image_id
            )));
        }
    }

    let mut grouped: BTreeMap<&str, Vec<&BoxAnnotation>> = BTreeMap::new();
    for a in annotations {
        if !a.bbox.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "invalid box {:?} for image {:?}",
                a.bbox, a.image_id
            )));
        }
        grouped.entry(a.image_id.as_str()).or_default().push(a);
    }

    let k = annotations.len();
    let mut features = Vec::with_capacity(k * channels);
    let mut labels = Vec::with_capacity(k);
    let mut boxes = Vec::with_capacity(k * 4);
    for (image_id, anns) in grouped {
        let map = by_id
            .get(image_id)
            .ok_or_else(|| Error::MissingImage(image_id.to_string()))?;
        for a in anns {
            features.extend(pool_box(map, &a.bbox).into_iter().map(|v| v as f32));
            labels.push(i32::try_from(a.class_id).map_err(|_| {
                Error::InvalidArgument(format!("class id {} too large", a.class_id))
            })?);
            let b = a.bbox;
            boxes.extend([b.cx as f32, b.cy as f32, b.w as f32, b.h as f32]);
        }
    }

    let max_class = annotations.iter().map(|a| a.class_id).max().unwrap_or(0);
    let class_count = class_count.unwrap_or(max_class + 1);
    let set = FeatureSet::new(
        model_id,
        dataset_id,
        channels,
        class_count,
        features,
        labels,
        Some(boxes),
    );
    let violations = set.validate(true);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok(set)
}

/// Parses `image_id class_id cx cy w h` lines; blank lines and `#` comments
/// are skipped.
pub fn parse_annotations(text: &str, origin: &Path) -> Result<Vec<BoxAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        let class_id = fields[1]
            .parse::<usize>()
            .map_err(|_| err(format!("bad class id {:?}", fields[1])))?;
        let mut coords = [0.0; 4];
        for (c, f) in coords.iter_mut().zip(&fields[2..]) {
            *c = f
                .parse::<f64>()
                .map_err(|_| err(format!("not a number: {f:?}")))?;
        }
        let bbox = NormalizedBox {
            cx: coords[0],
            cy: coords[1],
            w: coords[2],
            h: coords[3],
        };
        if !bbox.is_valid() {
            return Err(err(format!("box {coords:?} outside normalized bounds")));
        }
        out.push(BoxAnnotation {
            image_id: fields[0].to_string(),
            class_id,
            bbox,
        });
    }
    Ok(out)
}

pub fn format_annotations(annotations: &[BoxAnnotation]) -> String {
    annotations
        .iter()
        .map(|a| {
            let b = a.bbox;
            format!(
                "{} {} {} {} {} {}\n",
                a.image_id, a.class_id, b.cx, b.cy, b.w, b.h
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub image_id: String,
    pub file: String,
    /// `[channels, height, width]`
    pub shape: [usize; 3],
    pub image_height: u32,
    pub image_width: u32,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsManifest {
    pub format_version: u32,
    pub model_id: String,
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
    pub maps: Vec<MapEntry>,
}

/// Per-image feature maps plus their box annotations for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct MapBundle {
    pub model_id: String,
    pub dataset_id: String,
    pub class_count: Option<usize>,
    pub maps: Vec<SpatialFeatureMap>,
    pub annotations: Vec<BoxAnnotation>,
}

impl MapBundle {
    pub fn to_feature_set(&self) -> Result<FeatureSet> {
        construct_detection_features(
            &self.maps,
            &self.annotations,
            &self.model_id,
            &self.dataset_id,
            self.class_count,
        )
    }
}

pub fn is_map_bundle(dir: impl AsRef<Path>) -> bool {
    dir.as_ref().join(MAPS_MANIFEST_FILE).is_file()
}

fn map_file_name(image_id: &str) -> String {
    format!("feat_{image_id}.f32")
}

fn check_image_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!("unusable image id {id:?}")));
    }
    Ok(())
}

pub fn write_map_bundle(bundle: &MapBundle, dir: impl AsRef<Path>) -> Result<MapsManifest> {
    let dir = dir.as_ref();
    for m in &bundle.maps {
        check_image_id(&m.image_id)?;
        m.check()?;
    }
    for a in &bundle.annotations {
        check_image_id(&a.image_id)?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut maps: Vec<&SpatialFeatureMap> = bundle.maps.iter().collect();
    maps.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut entries = Vec::with_capacity(maps.len());
    for m in maps {
        let file = map_file_name(&m.image_id);
        let bytes = f32_bytes(&m.data);
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(MapEntry {
            image_id: m.image_id.clone(),
            file,
            shape: [m.channels, m.height, m.width],
            image_height: m.image_height,
            image_width: m.image_width,
            checksum: format!("{:016x}", fnv1a64(&bytes)),
        });
    }

    let path = dir.join(ANNOTATIONS_FILE);
    fs::write(&path, format_annotations(&bundle.annotations)).map_err(|e| Error::io(&path, e))?;

    let manifest = MapsManifest {
        format_version: MAPS_FORMAT_VERSION,
        model_id: bundle.model_id.clone(),
        dataset_id: bundle.dataset_id.clone(),
        class_count: bundle.class_count,
        maps: entries,
    };
    let path = dir.join(MAPS_MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_map_bundle(dir: impl AsRef<Path>) -> Result<MapBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MAPS_MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::ManifestMissing {
                path: dir.to_path_buf(),
            }
        } else {
            Error::io(&manifest_path, e)
        }
    })?;
    let manifest: MapsManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    if manifest.format_version != MAPS_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: manifest_path,
            version: manifest.format_version,
        });
    }

    let mut maps = Vec::with_capacity(manifest.maps.len());
    for entry in &manifest.maps {
        let path: PathBuf = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::TensorMissing { path: path.clone() }
            } else {
                Error::io(&path, e)
            }
        })?;
        let [c, h, w] = entry.shape;
        let expected = (c * h * w * 4) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::ShapeMismatch {
                path,
                expected,
                actual: bytes.len() as u64,
            });
        }
        let actual = format!("{:016x}", fnv1a64(&bytes));
        if !entry.checksum.eq_ignore_ascii_case(&actual) {
            return Err(Error::ChecksumMismatch {
                path,
                expected: entry.checksum.clone(),
                actual,
            });
        }
        maps.push(SpatialFeatureMap {
            image_id: entry.image_id.clone(),
            channels: c,
            height: h,
            width: w,
            data: f32_from_bytes(&bytes),
            image_height: entry.image_height,
            image_width: entry.image_width,
        });
    }

    let ann_path = dir.join(ANNOTATIONS_FILE);
    let text = fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    let annotations = parse_annotations(&text, &ann_path)?;

    Ok(MapBundle {
        model_id: manifest.model_id,
        dataset_id: manifest.dataset_id,
        class_count: manifest.class_count,
        maps,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_index_map(id: &str, side: usize) -> SpatialFeatureMap {
        SpatialFeatureMap {
            image_id: id.into(),
            channels: 1,
            height: side,
            width: side,
            data: (0..side * side).map(|i| (i / side) as f32).collect(),
            image_height: 64,
            image_width: 64,
        }
    }

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> NormalizedBox {
        NormalizedBox { cx, cy, w, h }
    }

    fn ann(id: &str, class_id: usize, b: NormalizedBox) -> BoxAnnotation {
        BoxAnnotation {
            image_id: id.into(),
            class_id,
            bbox: b,
        }
    }

    #[test]
    fn pool_examples() {
        let m = row_index_map("a", 4);
        assert_eq!(pool_box(&m, &bx(0.5, 0.5, 1.0, 1.0)), vec![1.5]);
        assert_eq!(pool_box(&m, &bx(0.5, 0.75, 1.0, 0.5)), vec![2.5]);

        // Off the 4×4 cell boundary a tiny box sits inside one cell.
        assert_eq!(pool_box(&m, &bx(0.3, 0.3, 0.01, 0.01)), vec![1.0]);
        // On a 5×5 grid the image center is a cell center.
        let m5 = SpatialFeatureMap {
            data: (0..25).map(|i| i as f32).collect(),
            ..row_index_map("b", 5)
        };
        assert_eq!(pool_box(&m5, &bx(0.5, 0.5, 0.01, 0.01)), vec![12.0]);
    }

    #[test]
    fn span_never_empty_and_clamped() {
        assert_eq!(cell_span(0.5, 1e-9, 4), (1, 3));
        assert_eq!(cell_span(0.25, 0.0, 4), (1, 2));
        assert_eq!(cell_span(1.0, 0.2, 4), (3, 4));
        assert_eq!(cell_span(0.0, 0.2, 4), (0, 1));
        assert_eq!(cell_span(0.95, 0.5, 10), (7, 10));
    }

    #[test]
    fn construct_counts_and_order() {
        let maps: Vec<_> = ["img2", "img0", "img1"]
            .iter()
            .map(|id| SpatialFeatureMap {
                channels: 256,
                data: vec![0.5; 256 * 4 * 4],
                ..row_index_map(id, 4)
            })
            .collect();
        let anns = vec![
            ann("img1", 0, bx(0.5, 0.5, 0.5, 0.5)),
            ann("img0", 1, bx(0.2, 0.2, 0.1, 0.1)),
            ann("img1", 2, bx(0.6, 0.6, 0.3, 0.3)),
            ann("img2", 1, bx(0.5, 0.5, 1.0, 1.0)),
            ann("img0", 0, bx(0.8, 0.8, 0.2, 0.2)),
        ];
        let s = construct_detection_features(&maps, &anns, "m", "d", None).unwrap();
        assert_eq!((s.k, s.h, s.class_count), (5, 256, 3));
        assert!(s.has_boxes());
        assert_eq!(s.labels, vec![1, 0, 0, 2, 1]);
        assert_eq!(&s.boxes.as_ref().unwrap()[..4], &[0.2, 0.2, 0.1, 0.1]);
    }

    #[test]
    fn construct_errors() {
        let maps = vec![row_index_map("a", 4)];
        assert!(matches!(
            construct_detection_features(&maps, &[], "m", "d", None),
            Err(Error::NoSamples)
        ));

        let anns = vec![
            ann("a", 0, bx(0.5, 0.5, 1.0, 1.0)),
            ann("zz", 1, bx(0.5, 0.5, 1.0, 1.0)),
        ];
        assert!(matches!(
            construct_detection_features(&maps, &anns, "m", "d", None),
            Err(Error::MissingImage(ref id)) if id == "zz"
        ));

        let wide = SpatialFeatureMap {
            channels: 512,
            data: vec![0.0; 512 * 16],
            ..row_index_map("b", 4)
        };
        let narrow = SpatialFeatureMap {
            channels: 256,
            data: vec![0.0; 256 * 16],
            ..row_index_map("a", 4)
        };
        assert!(matches!(
            construct_detection_features(&[narrow, wide], &anns, "m", "d", None),
            Err(Error::InconsistentChannels {
                expected: 256,
                found: 512,
                ..
            })
        ));
    }

    #[test]
    fn annotation_lines() {
        let text = "# image class cx cy w h\nimg0 1 0.5 0.5 0.25 0.25\n\nimg1 0 0.1 0.9 0.2 0.2\n";
        let a = parse_annotations(text, Path::new("ann.txt")).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1], ann("img1", 0, bx(0.1, 0.9, 0.2, 0.2)));
        assert_eq!(
            parse_annotations(&format_annotations(&a), Path::new("x")).unwrap(),
            a
        );

        let e = parse_annotations("img0 1 0.5 0.5 0 0.2\n", Path::new("ann.txt")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(parse_annotations("img0 1 0.5 0.5\n", Path::new("a")).is_err());
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = MapBundle {
            model_id: "m".into(),
            dataset_id: "d".into(),
            class_count: Some(3),
            maps: vec![row_index_map("b", 4), row_index_map("a", 3)],
            annotations: vec![
                ann("a", 0, bx(0.5, 0.5, 1.0, 1.0)),
                ann("b", 2, bx(0.5, 0.75, 1.0, 0.5)),
            ],
        };
        write_map_bundle(&bundle, dir.path()).unwrap();
        assert!(is_map_bundle(dir.path()));
        assert!(dir.path().join("feat_a.f32").is_file());
        let back = read_map_bundle(dir.path()).unwrap();
        assert_eq!(back.annotations, bundle.annotations);
        assert_eq!(back.maps[0], bundle.maps[1]);
        let s = back.to_feature_set().unwrap();
        assert_eq!(s.features, vec![1.0, 2.5]);
        assert_eq!(s.class_count, 3);

        let path = dir.path().join("feat_b.f32");
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 0x80;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_map_bundle(dir.path()),
            Err(Error::ChecksumMismatch { .. })
        ));
    }
}
