//! Seeded synthetic data: gaussian blobs and a small relation corpus.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Dataset, EntitySpan, RelationInstance, TokenSpan};

#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
}

/// `k` isotropic gaussian blobs of `per_blob` points each (stddev `sigma`),
/// centers pairwise at least `separation` apart. Points are interleaved
/// blob by blob so the label sequence is `0, 1, …, k-1, 0, 1, …`.
pub fn blobs(k: usize, per_blob: usize, dim: usize, separation: f64, sigma: f64, seed: u64) -> Blobs {
    assert!(k >= 1 && dim >= 1 && per_blob >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Centers uniform in a cube large enough that rejection sampling
    // terminates quickly.
    let side = separation * (k as f64).powf(1.0 / dim as f64).max(1.0) * 4.0;
    let mut centers = Array2::<f64>::zeros((k, dim));
    let mut placed = 0;
    while placed < k {
        let candidate: Vec<f64> = (0..dim).map(|_| rng.random_range(-side..side)).collect();
        let far = (0..placed).all(|c| {
            centers
                .row(c)
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                >= separation * separation
        });
        if far {
            centers.row_mut(placed).assign(&ndarray::ArrayView1::from(&candidate));
            placed += 1;
        }
    }

    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let n = k * per_blob;
    let mut points = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for j in 0..dim {
            points[[i, j]] = centers[[c, j]] + normal.sample(&mut rng);
        }
        labels.push(c);
    }
    Blobs {
        points,
        labels,
        centers,
    }
}

const FIRST: [&str; 16] = [
    "Ada", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira",
    "Luca", "Mira", "Nils", "Olga", "Pavel",
];
const LAST: [&str; 12] = [
    "Adler", "Brandt", "Costa", "Dietz", "Engel", "Fuchs", "Graf", "Horn", "Iversen", "Jung",
    "Keller", "Lind",
];
const CONNECTORS: [&str; 8] = [
    "reportedly", ", according to records ,", "in 1998", "later", "officially", "once", "briefly",
    "",
];

/// A labeled corpus of `n_relations × per_relation` template sentences.
/// Relation `r` is named `P<r>` (zero-padded); its sentences read
/// `<head> <connector> rel<r> <tail> .` with random two-token names.
pub fn relation_corpus(n_relations: usize, per_relation: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = |rng: &mut ChaCha8Rng| {
        vec![
            FIRST[rng.random_range(0..FIRST.len())].to_string(),
            LAST[rng.random_range(0..LAST.len())].to_string(),
        ]
    };
    // zero-padded so label order equals relation order
    let width = n_relations.saturating_sub(1).to_string().len();
    let mut instances = Vec::with_capacity(n_relations * per_relation);
    for r in 0..n_relations {
        let label = format!("P{r:0width$}");
        for i in 0..per_relation {
            let head = name(&mut rng);
            let tail = name(&mut rng);
            let connector = CONNECTORS[rng.random_range(0..CONNECTORS.len())];
            let mut tokens = head.clone();
            tokens.extend(connector.split_whitespace().map(str::to_string));
            tokens.push(format!("rel{r}"));
            let tail_start = tokens.len();
            tokens.extend(tail.iter().cloned());
            tokens.push(".".into());
            instances.push(RelationInstance {
                instance_id: format!("{label}#{i}"),
                tokens,
                head: EntitySpan {
                    mention_text: head.join(" "),
                    kb_id: None,
                    token_spans: vec![TokenSpan::new(0, 1)],
                },
                tail: EntitySpan {
                    mention_text: tail.join(" "),
                    kb_id: None,
                    token_spans: vec![TokenSpan::new(tail_start, tail_start + 1)],
                },
                gold_relation: Some(label.clone()),
            });
        }
    }
    Dataset::new(format!("synthetic-{n_relations}x{per_relation}"), instances).expect("valid synthetic corpus")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_centers_respect_separation() {
        let b = blobs(25, 4, 8, 10.0, 1.0, 7);
        for i in 0..25 {
            for j in i + 1..25 {
                let d: f64 = b
                    .centers
                    .row(i)
                    .iter()
                    .zip(b.centers.row(j))
                    .map(|(a, c)| (a - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= 10.0);
            }
        }
        assert_eq!(b.points.nrows(), 100);
        assert_eq!(&b.labels[..3], &[0, 1, 2]);
    }

    #[test]
    fn blobs_are_seeded() {
        assert_eq!(blobs(3, 5, 2, 10.0, 1.0, 1), blobs(3, 5, 2, 10.0, 1.0, 1));
        assert_ne!(blobs(3, 5, 2, 10.0, 1.0, 1).points, blobs(3, 5, 2, 10.0, 1.0, 2).points);
    }

    #[test]
    fn corpus_round_trips_through_fewrel_json() {
        let ds = relation_corpus(3, 4, 0);
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.relation_inventory, vec!["P0", "P1", "P2"]);
        let back = crate::corpus::parse_fewrel("x", &ds.to_fewrel_json()).unwrap();
        assert_eq!(back.instances, ds.instances);
    }
}
