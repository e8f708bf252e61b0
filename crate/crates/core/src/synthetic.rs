//! Seeded synthetic feature sets for tests, benchmarks and fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::feature_store::FeatureSet;

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Balanced labels `0, 1, …, C−1, 0, 1, …` shuffled.
fn balanced_labels(rng: &mut impl Rng, k: usize, c: usize) -> Vec<i32> {
    let mut labels: Vec<i32> = (0..k).map(|i| (i % c) as i32).collect();
    labels.shuffle(rng);
    labels
}

fn random_boxes(rng: &mut impl Rng, k: usize) -> Vec<f32> {
    (0..k)
        .flat_map(|_| {
            let w: f64 = rng.random_range(0.05..0.6);
            let h: f64 = rng.random_range(0.05..0.6);
            let cx: f64 = rng.random_range(w / 2.0..1.0 - w / 2.0);
            let cy: f64 = rng.random_range(h / 2.0..1.0 - h / 2.0);
            [cx as f32, cy as f32, w as f32, h as f32]
        })
        .collect()
}

/// Two Gaussian classes of unit variance whose means are `separation`
/// standard deviations apart along the first axis.
pub fn separated_gaussians(seed: u64, k: usize, h: usize, separation: f64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(&mut rng, k, 2);
    let mut features = Vec::with_capacity(k * h);
    for &label in &labels {
        for j in 0..h {
            let shift = if j == 0 {
                separation * label as f64
            } else {
                0.0
            };
            features.push((shift + normal(&mut rng)) as f32);
        }
    }
    FeatureSet::new("gaussians", "synthetic", h, 2, features, labels, None)
}

/// Detection-shaped feature set with Gaussian features and random boxes.
pub fn gaussian_detection_set(seed: u64, k: usize, h: usize, c: usize) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(&mut rng, k, c);
    let features = (0..k * h).map(|_| normal(&mut rng) as f32).collect();
    let boxes = random_boxes(&mut rng, k);
    FeatureSet::new("gaussian", "synthetic", h, c, features, labels, Some(boxes))
}

/// Arbitrary valid feature set, including extreme but finite f32 values,
/// for storage roundtrips.
pub fn random_feature_set(rng: &mut impl Rng) -> FeatureSet {
    let k = rng.random_range(2..=64);
    let h = rng.random_range(1..=32);
    let c = rng.random_range(1..=6usize).min(k);
    let mut labels: Vec<i32> = (0..k).map(|_| rng.random_range(0..c as i32)).collect();
    labels[..c]
        .iter_mut()
        .enumerate()
        .for_each(|(i, l)| *l = i as i32);
    let features = (0..k * h)
        .map(|_| match rng.random_range(0..10) {
            0 => f32::MIN_POSITIVE / 8.0,
            1 => -f32::MAX,
            2 => -0.0,
            _ => f32::from_bits(
                rng.random::<u32>() & 0x7f7f_ffff | (rng.random::<u32>() & 0x8000_0000),
            )
            .clamp(-1e30, 1e30),
        })
        .collect();
    let boxes = rng.random_bool(0.5).then(|| {
        (0..k * 4)
            .map(|_| match rng.random_range(0..8) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f32>(),
            })
            .collect()
    });
    let model = format!("model-{}", rng.random::<u16>());
    FeatureSet::new(model, "roundtrip", h, c, features, labels, boxes)
}

/// Configuration for [`planted_benchmark`].
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub models: usize,
    pub samples: usize,
    pub dims: usize,
    pub classes: usize,
    /// Class-mean distance, in noise standard deviations, at quality 1.
    pub max_separation: f64,
    /// Box-signal gain at quality 1.
    pub max_box_gain: f64,
    /// Standard deviation of the per-model logit offset that perturbs the
    /// free energy without touching class or box structure.
    pub energy_noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            models: 10,
            samples: 2000,
            dims: 24,
            classes: 4,
            max_separation: 2.0,
            max_box_gain: 4.0,
            energy_noise: 0.3,
        }
    }
}

/// One target dataset seen through several models of planted quality.
#[derive(Debug, Clone)]
pub struct PlantedBenchmark {
    /// Quality in `[0, 1]` per model, the ground-truth ranking.
    pub quality: Vec<f64>,
    pub sets: Vec<FeatureSet>,
}

/// Models whose features carry class separability and box regressability
/// proportional to a planted quality index. Every model sees the same
/// samples, labels and boxes.
pub fn planted_benchmark(seed: u64, config: &PlantedConfig) -> PlantedBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let PlantedConfig {
        models,
        samples: k,
        dims: h,
        classes: c,
        ..
    } = *config;
    let labels = balanced_labels(&mut rng, k, c);
    let boxes = random_boxes(&mut rng, k);

    let mut quality: Vec<f64> = (0..models)
        .map(|m| (m as f64 + 0.5) / models as f64)
        .collect();
    quality.shuffle(&mut rng);

    let sets = quality
        .iter()
        .enumerate()
        .map(|(m, &q)| {
            // Random unit class directions and a random box embedding.
            let means: Vec<Vec<f64>> = (0..c).map(|_| unit_vector(&mut rng, h)).collect();
            let embed: Vec<Vec<f64>> = (0..4).map(|_| unit_vector(&mut rng, h)).collect();
            let separation = q * config.max_separation;
            let gain = q * config.max_box_gain;
            let offset = config.energy_noise * normal(&mut rng);

            let mut features = Vec::with_capacity(k * h);
            for (row, &label) in labels.iter().enumerate() {
                let b = &boxes[row * 4..row * 4 + 4];
                for j in 0..h {
                    let mut v = offset + normal(&mut rng);
                    v += separation * means[label as usize][j];
                    for (e, &bv) in embed.iter().zip(b) {
                        v += gain * (bv as f64 - 0.5) * 4.0 * e[j];
                    }
                    features.push(v as f32);
                }
            }
            FeatureSet::new(
                format!("model_{m:02}"),
                format!("planted_{seed}"),
                h,
                c,
                features,
                labels.clone(),
                Some(boxes.clone()),
            )
        })
        .collect();
    PlantedBenchmark { quality, sets }
}

fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_produce_valid_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = random_feature_set(&mut rng);
            assert!(s.validate(false).is_empty(), "{:?}", s.validate(false));
        }
        assert!(separated_gaussians(1, 40, 3, 10.0)
            .validate(false)
            .is_empty());
        assert!(gaussian_detection_set(1, 40, 3, 3)
            .validate(true)
            .is_empty());
        let p = planted_benchmark(0, &PlantedConfig::default());
        assert_eq!(p.sets.len(), 10);
        assert!(p.sets.iter().all(|s| s.validate(true).is_empty()));
    }

    #[test]
    fn planted_is_deterministic() {
        let a = planted_benchmark(7, &PlantedConfig::default());
        let b = planted_benchmark(7, &PlantedConfig::default());
        assert_eq!(a.quality, b.quality);
        assert_eq!(a.sets, b.sets);
    }
}
