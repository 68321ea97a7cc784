//! One-dimensional kernel ridge regression with a gaussian kernel, used to
//! smooth the silhouette-vs-k curve.

/// Fitted model: `f(x) = Σ αᵢ exp(-(x - xᵢ)² / (2h²))` with
/// `α = (K + λI)⁻¹ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidge {
    xs: Vec<f64>,
    alpha: Vec<f64>,
    pub bandwidth: f64,
    pub ridge: f64,
}

/// Median of all pairwise |xᵢ - xⱼ|, i < j.
pub fn median_bandwidth(xs: &[f64]) -> f64 {
    let mut gaps: Vec<f64> = xs
        .iter()
        .enumerate()
        .flat_map(|(i, a)| xs[i + 1..].iter().map(move |b| (a - b).abs()))
        .collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len();
    let median = if m % 2 == 1 {
        gaps[m / 2]
    } else {
        0.5 * (gaps[m / 2 - 1] + gaps[m / 2])
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn gaussian(a: f64, b: f64, h: f64) -> f64 {
    (-(a - b).powi(2) / (2.0 * h * h)).exp()
}

/// Solves `A z = b` for symmetric positive definite `A` (row-major n×n).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 {
            return None;
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / diag;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i * n + k] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k * n + i] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    Some(b)
}

impl KernelRidge {
    pub fn fit(xs: &[f64], ys: &[f64], bandwidth: f64, ridge: f64) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(bandwidth > 0.0 && ridge > 0.0);
        let n = xs.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = gaussian(xs[i], xs[j], bandwidth);
            }
            gram[i * n + i] += ridge;
        }
        let alpha = cholesky_solve(gram, ys.to_vec()).expect("K + λI is positive definite");
        Self {
            xs: xs.to_vec(),
            alpha,
            bandwidth,
            ridge,
        }
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.xs
            .iter()
            .zip(&self.alpha)
            .map(|(xi, a)| a * gaussian(x, *xi, self.bandwidth))
            .sum()
    }
}
