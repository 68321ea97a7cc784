//! Brute-force reference implementations, deliberately naive: pair
//! enumeration, per-instance set intersections and explicit entropy sums.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Every set partition of `n` items as a restricted growth string.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=max + 1 {
            prefix.push(label);
            grow(prefix, max.max(label), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    grow(&mut vec![0], 0, n, &mut out);
    out
}

fn members(labels: &[usize], of: usize) -> BTreeSet<usize> {
    (0..labels.len()).filter(|&j| labels[j] == labels[of]).collect()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn b_cubed(gold: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let n = gold.len();
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..n {
        let c = members(pred, i);
        let g = members(gold, i);
        let both = c.intersection(&g).count() as f64;
        p += both / c.len() as f64;
        r += both / g.len() as f64;
    }
    let (p, r) = (p / n as f64, r / n as f64);
    (p, r, f1(p, r))
}

fn distinct(labels: &[usize]) -> BTreeSet<usize> {
    labels.iter().copied().collect()
}

fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut h = 0.0;
    for c in distinct(labels) {
        let p = labels.iter().filter(|&&l| l == c).count() as f64 / n;
        h -= p * p.ln();
    }
    h
}

/// H(a | b) = -Σ_b Σ_a n_ab/n · ln(n_ab / n_b)
fn conditional_entropy(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut h = 0.0;
    for kb in distinct(b) {
        let n_b = b.iter().filter(|&&l| l == kb).count() as f64;
        for ka in distinct(a) {
            let n_ab = (0..a.len()).filter(|&i| a[i] == ka && b[i] == kb).count() as f64;
            if n_ab > 0.0 {
                h -= n_ab / n * (n_ab / n_b).ln();
            }
        }
    }
    h
}

pub fn v_measure(gold: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let hg = entropy(gold);
    let hp = entropy(pred);
    let h = if hg == 0.0 { 1.0 } else { 1.0 - conditional_entropy(gold, pred) / hg };
    let c = if hp == 0.0 { 1.0 } else { 1.0 - conditional_entropy(pred, gold) / hp };
    (h, c, f1(h, c))
}

pub fn ari(gold: &[usize], pred: &[usize]) -> f64 {
    let n = gold.len();
    let (mut both, mut gold_only, mut pred_only, mut neither) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            match (gold[i] == gold[j], pred[i] == pred[j]) {
                (true, true) => both += 1,
                (true, false) => gold_only += 1,
                (false, true) => pred_only += 1,
                (false, false) => neither += 1,
            }
        }
    }
    let total = (both + gold_only + pred_only + neither) as f64;
    if total == 0.0 {
        return 1.0;
    }
    let same_gold = (both + gold_only) as f64;
    let same_pred = (both + pred_only) as f64;
    let expected = same_gold * same_pred / total;
    let max = 0.5 * (same_gold + same_pred);
    if max == expected {
        return 1.0;
    }
    (both as f64 - expected) / (max - expected)
}

/// Best total over all injections of the smaller side into the larger.
pub fn best_matching(counts: &[Vec<u64>]) -> u64 {
    let rows = counts.len();
    let cols = counts.first().map_or(0, Vec::len);
    fn go(counts: &[Vec<u64>], row: usize, used: &mut Vec<bool>, transpose: bool) -> u64 {
        let (r, c) = if transpose {
            (counts[0].len(), counts.len())
        } else {
            (counts.len(), counts[0].len())
        };
        if row == r {
            return 0;
        }
        let mut best = 0;
        for col in 0..c {
            if !used[col] {
                used[col] = true;
                let v = if transpose { counts[col][row] } else { counts[row][col] };
                best = best.max(v + go(counts, row + 1, used, transpose));
                used[col] = false;
            }
        }
        best
    }
    if rows == 0 || cols == 0 {
        return 0;
    }
    let transpose = rows > cols;
    let mut used = vec![false; if transpose { rows } else { cols }];
    go(counts, 0, &mut used, transpose)
}
