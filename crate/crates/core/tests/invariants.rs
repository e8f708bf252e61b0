use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use transferability::energy::{energy_score, free_energy};
use transferability::fusion::{fuse_and_rank, ScoreKind};
use transferability::lda::lda_score;
use transferability::logme::EvidenceModel;
use transferability::metrics::{
    evaluate_benchmark_with, kendall_tau, weighted_kendall_tau, BenchmarkTable,
};
use transferability::svd_reg::reconstruct_with_rank;
use transferability::{FeatureSet, Ranking};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Kendall tau by direct pair enumeration.
fn brute_tau(g: &[f64], p: &[f64]) -> f64 {
    let n = g.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let a = (g[i] > g[j]) as i64 - (g[i] < g[j]) as i64;
            let b = (p[i] > p[j]) as i64 - (p[i] < p[j]) as i64;
            s += a * b;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

fn tied_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u8..5, n).prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn labelled_set(k: usize, h: usize, c: usize) -> impl Strategy<Value = FeatureSet> {
    prop::collection::vec(-4.0f32..4.0, k * h).prop_map(move |features| {
        let labels = (0..k).map(|i| (i % c) as i32).collect();
        FeatureSet::new("m", "d", h, c, features, labels, None)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_shift_law(row in prop::collection::vec(-30.0f64..30.0, 1..40), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
        prop_assert!((free_energy(&shifted) - (free_energy(&row) - c)).abs() <= 1e-9);
    }

    #[test]
    fn energy_bounded_by_max(row in prop::collection::vec(-30.0f64..30.0, 1..40)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = -free_energy(&row);
        prop_assert!(lse >= max && lse <= max + (row.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn energy_ignores_row_order(features in prop::collection::vec(-5.0f32..5.0, 12), rot in 0usize..4) {
        let set = FeatureSet::new("m", "d", 3, 1, features.clone(), vec![0; 4], None);
        let mut rows: Vec<&[f32]> = features.chunks(3).collect();
        rows.rotate_left(rot);
        let permuted = FeatureSet::new("m", "d", 3, 1, rows.concat(), vec![0; 4], None);
        prop_assert!((energy_score(&set).score - energy_score(&permuted).score).abs() < 1e-12);
    }

    #[test]
    fn fusion_invariant_under_positive_affine_maps(
        raw in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..8),
        a in 0.1f64..10.0,
        b in -100.0f64..100.0,
    ) {
        let table = |f: &dyn Fn(f64) -> f64| -> Vec<(String, BTreeMap<ScoreKind, f64>)> {
            raw.iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    (format!("m{i}"), BTreeMap::from([(ScoreKind::Energy, f(x)), (ScoreKind::Cls, y)]))
                })
                .collect()
        };
        let kinds = [ScoreKind::Energy, ScoreKind::Cls];
        let (r1, k1) = fuse_and_rank(&table(&|x| x), &kinds).unwrap();
        let (r2, _) = fuse_and_rank(&table(&|x| a * x + b), &kinds).unwrap();
        for (x, y) in r1.iter().zip(&r2) {
            prop_assert!((x.fused - y.fused).abs() < 1e-9);
        }
        prop_assert!(r1.iter().all(|r| (0.0..=2.0).contains(&r.fused)));
        prop_assert_eq!(k1.entries.len(), raw.len());
    }

    #[test]
    fn tau_matches_pair_enumeration(g in tied_vector(9), p in tied_vector(9)) {
        prop_assert_eq!(kendall_tau(&g, &p), brute_tau(&g, &p));
    }

    #[test]
    fn tau_antisymmetry(g in tied_vector(8), p in tied_vector(8)) {
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        prop_assert_eq!(kendall_tau(&g, &neg), -kendall_tau(&g, &p));
        let (w, wn) = (weighted_kendall_tau(&g, &p), weighted_kendall_tau(&g, &neg));
        prop_assert!((w + wn).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&w));
    }

    #[test]
    fn weighted_tau_perfect_on_itself(g in tied_vector(8)) {
        let w = weighted_kendall_tau(&g, &g);
        if g.iter().any(|&v| v != g[0]) {
            prop_assert!((w - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn pr_topk_monotone(
        acc in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 6),
        pred in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 3),
    ) {
        let models: Vec<String> = (0..6).map(|i| format!("m{i}")).collect();
        let datasets: Vec<String> = (0..3).map(|i| format!("d{i}")).collect();
        let table = BenchmarkTable::new(models.clone(), datasets.clone(), acc).unwrap();
        let rankings: BTreeMap<String, Ranking> = datasets
            .iter()
            .zip(&pred)
            .map(|(d, p)| (d.clone(), Ranking::from_scores(models.iter().cloned().zip(p.iter().copied()))))
            .collect();
        let eval = evaluate_benchmark_with(&table, &rankings, &[1, 2, 3, 4, 5, 6]).unwrap();
        let pr: Vec<f64> = eval.pr_top.values().copied().collect();
        prop_assert!(pr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(pr[5], 1.0);
    }

    #[test]
    fn svd_projection_is_idempotent(f in sized_matrix(20, 8), seed in any::<u64>()) {
        let b = DMatrix::from_fn(f.nrows(), 4, |i, j| ((seed >> ((i + j) % 60)) & 0xff) as f64 / 255.0);
        let n = f.nrows().min(f.ncols());
        let mut previous = f64::INFINITY;
        for r in 1..=n {
            let once = reconstruct_with_rank(&f, &b, r);
            let twice = reconstruct_with_rank(&f, &once, r);
            prop_assert!((&once - &twice).amax() < 1e-9);
            let err = (&b - &once).norm_squared();
            prop_assert!(err <= previous + 1e-9);
            previous = err;
        }
    }

    #[test]
    fn lda_invariant_to_label_permutation(set in labelled_set(18, 3, 3)) {
        let perm = [2i32, 0, 1];
        let relabelled = FeatureSet {
            labels: set.labels.iter().map(|&l| perm[l as usize]).collect(),
            ..set.clone()
        };
        let a = lda_score(&set).unwrap();
        let b = lda_score(&relabelled).unwrap();
        prop_assert!((a.score - b.score).abs() < 1e-9);
    }

    #[test]
    fn lda_score_grows_with_separation(noise in prop::collection::vec(-1.0f32..1.0, 40 * 2), s in 0.0f32..3.0) {
        let labels: Vec<i32> = (0..40).map(|i| i % 2).collect();
        let build = |sep: f32| {
            let features = noise
                .chunks(2)
                .zip(&labels)
                .flat_map(|(n, &l)| [n[0] + sep * l as f32, n[1]])
                .collect();
            FeatureSet::new("m", "d", 2, 2, features, labels.clone(), None)
        };
        let near = lda_score(&build(s)).unwrap().score;
        let far = lda_score(&build(s + 2.0)).unwrap().score;
        prop_assert!(far >= near - 1e-9, "{far} < {near}");
    }

    #[test]
    fn logme_invariant_to_row_order(f in matrix(14, 3), y in prop::collection::vec(-2.0f64..2.0, 14), rot in 1usize..14) {
        let y = DVector::from_vec(y);
        let order: Vec<usize> = (0..14).map(|i| (i + rot) % 14).collect();
        let fp = f.select_rows(&order);
        let yp = DVector::from_iterator(14, order.iter().map(|&i| y[i]));
        let a = EvidenceModel::new(&f).maximize(&y);
        let b = EvidenceModel::new(&fp).maximize(&yp);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a.evidence - b.evidence).abs() <= 1e-8 * a.evidence.abs().max(1.0)),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }
}
