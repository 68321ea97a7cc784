//! Euclidean distance helpers.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

/// Above this many points the pairwise matrix is not materialized.
const FULL_MATRIX_LIMIT: usize = 8192;

/// Squared euclidean distance, eight-lane accumulation.
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            let d = x[lane] - y[lane];
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_euclidean(a, b).sqrt()
}

pub fn sq_norms(x: &Array2<f64>) -> Array1<f64> {
    x.map_axis(Axis(1), |row: ArrayView1<f64>| row.dot(&row))
}

/// Squared distances from every row of `x` to every row of `centers`
/// through the Gram expansion. Values at or below rounding level of the
/// norms are flushed to zero.
pub fn sq_distances_gram(
    x: &Array2<f64>,
    x_norms: &Array1<f64>,
    centers: &Array2<f64>,
) -> Array2<f64> {
    let c_norms = sq_norms(centers);
    let mut d = x.dot(&centers.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        let scale = x_norms[i] + c_norms[j];
        let sq = scale - 2.0 * *v;
        *v = if sq <= 1e-12 * scale { 0.0 } else { sq };
    }
    d
}

/// Row-major contiguous copy, so rows can be viewed as slices.
pub fn standard(x: &Array2<f64>) -> Array2<f64> {
    x.as_standard_layout().into_owned()
}

/// Exact pairwise euclidean distances, materialized for moderate `n` and
/// computed row by row otherwise.
pub struct PairwiseDistances<'a> {
    points: &'a Array2<f64>,
    full: Option<Vec<f64>>,
}

impl<'a> PairwiseDistances<'a> {
    /// `points` must be in standard (row-major) layout.
    pub fn new(points: &'a Array2<f64>) -> Self {
        assert!(points.is_standard_layout());
        let n = points.nrows();
        let full = (n <= FULL_MATRIX_LIMIT).then(|| {
            let mut m = vec![0.0; n * n];
            m.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
                let xi = points.row(i);
                let xi = xi.as_slice().expect("standard layout");
                for (j, out) in row.iter_mut().enumerate().skip(i + 1) {
                    *out = euclidean(xi, points.row(j).as_slice().expect("standard layout"));
                }
            });
            // mirror the upper triangle
            for i in 0..n {
                for j in 0..i {
                    m[i * n + j] = m[j * n + i];
                }
            }
            m
        });
        Self { points, full }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `out` with the distances from point `i` to every point.
    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        let n = self.len();
        match &self.full {
            Some(m) => out.copy_from_slice(&m[i * n..(i + 1) * n]),
            None => {
                let xi = self.points.row(i);
                let xi = xi.as_slice().expect("standard layout");
                for (j, o) in out.iter_mut().enumerate() {
                    *o = euclidean(xi, self.points.row(j).as_slice().expect("standard layout"));
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.row_into(i, &mut out);
        out
    }
}
