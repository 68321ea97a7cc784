use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use relcluster_core::clustering::{
    cluster_auto, estimate_k_elbow, kmeans, kmeans_fit, optics, silhouette, silhouette_from_distances,
    KMeansParams,
};
use relcluster_core::clustering::distance::PairwiseDistances;
use relcluster_core::evalmetrics::ari;
use relcluster_core::synthetic::blobs;
use relcluster_core::EmbeddingMatrix;

fn matrix(points: &Array2<f64>) -> EmbeddingMatrix {
    let rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

/// Random orthogonal matrix via Gram–Schmidt on a gaussian matrix.
fn rotation(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim {
        let mut v: Vec<f64> = (0..dim).map(|_| -> f64 { StandardNormal.sample(rng) }).collect();
        for j in 0..i {
            let dot: f64 = v.iter().zip(q.row(j)).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q.row(j)).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.row_mut(i).iter_mut().zip(&v).for_each(|(a, b)| *a = b / norm);
    }
    q
}

#[test]
fn two_blobs_recovered_exactly() {
    let data = blobs(2, 100, 8, 20.0, 1.0, 5);
    let a = kmeans(&matrix(&data.points), 2, 0).unwrap();
    assert_eq!(ari(&data.labels, &a.labels).unwrap(), 1.0);
}

#[test]
fn kmeans_is_reproducible() {
    let data = blobs(4, 30, 5, 6.0, 1.5, 9);
    let m = matrix(&data.points);
    let a = kmeans(&m, 4, 42).unwrap();
    let b = kmeans(&m, 4, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}

#[test]
fn inertia_never_increases() {
    let data = blobs(6, 40, 3, 3.0, 1.5, 2);
    let fit = kmeans_fit(&data.points, &KMeansParams::new(6, 1)).unwrap();
    for w in fit.inertia_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn ten_blobs_elbow_over_small_grid() {
    let data = blobs(10, 40, 8, 12.0, 1.0, 4);
    let grid: Vec<usize> = (2..=30).collect();
    let curve = estimate_k_elbow(&matrix(&data.points), &grid, 0).unwrap();
    assert!((8..=12).contains(&curve.k_hat), "k_hat = {}", curve.k_hat);
}

#[test]
fn elbow_ignores_grid_order() {
    let data = blobs(3, 20, 4, 10.0, 1.0, 8);
    let m = matrix(&data.points);
    let a = estimate_k_elbow(&m, &[2, 3, 4, 5, 6, 7], 3).unwrap();
    let b = estimate_k_elbow(&m, &[7, 5, 3, 6, 2, 4], 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cluster_auto_on_ten_blobs() {
    let data = blobs(10, 30, 8, 12.0, 1.0, 6);
    let (curve, a) = cluster_auto(&matrix(&data.points), 0).unwrap();
    assert_eq!(curve.k_hat, a.k);
    assert!(ari(&data.labels, &a.labels).unwrap() >= 0.9);
}

#[test]
fn optics_ids_are_contiguous() {
    let data = blobs(3, 25, 4, 8.0, 2.0, 1);
    let a = optics(&matrix(&data.points), 5).unwrap();
    let mut seen = vec![false; a.k];
    a.labels.iter().for_each(|&l| seen[l] = true);
    assert!(seen.iter().all(|&s| s));
}

fn points(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-10.0..10.0f64, dim), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn silhouette_bounded_and_isometry_invariant(
        rows in points(24, 4),
        labels in proptest::collection::vec(0usize..4, 24),
        seed in any::<u64>(),
    ) {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let s = silhouette(&m, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = rotation(4, &mut rng);
        let shift: Vec<f64> = (0..4).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 5.0 * z }).collect();
        let original = Array2::from_shape_fn((24, 4), |(i, j)| rows[i][j]);
        let moved = Array2::from_shape_fn((24, 4), |(i, a)| {
            (0..4).map(|b| q[[a, b]] * rows[i][b]).sum::<f64>() + shift[a]
        });
        // in f64, so that f32 storage rounding does not mask the comparison
        let s1 = silhouette_from_distances(&PairwiseDistances::new(&original), &labels).unwrap();
        let s2 = silhouette_from_distances(&PairwiseDistances::new(&moved), &labels).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-9, "{s1} vs {s2}");
        prop_assert!((s - s1).abs() <= 1e-5);
    }

    #[test]
    fn silhouette_relabel_invariant(
        rows in points(20, 3),
        labels in proptest::collection::vec(0usize..3, 20),
    ) {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let renamed: Vec<usize> = labels.iter().map(|&l| [7, 2, 11][l]).collect();
        prop_assert_eq!(silhouette(&m, &labels).unwrap(), silhouette(&m, &renamed).unwrap());
    }

    #[test]
    fn kmeans_labels_contiguous(rows in points(30, 3), k in 1usize..8, seed in any::<u64>()) {
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let a = kmeans(&m, k, seed).unwrap();
        prop_assert_eq!(a.k, k);
        prop_assert_eq!(a.cluster_sizes().iter().filter(|&&s| s == 0).count(), 0);
    }
}
