//! Summary statistics and embedding probes.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Binomial, DiscreteCDF};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One-sided sign test of "a beats b" over paired values. Ties are dropped.
/// Returns (wins, non-tied pairs, p-value).
pub fn sign_test(a: &[f64], b: &[f64]) -> (u64, u64, f64) {
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count() as u64;
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count() as u64;
    let n = wins + losses;
    if n == 0 {
        return (0, 0, 1.0);
    }
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    let p = if wins == 0 { 1.0 } else { dist.sf(wins - 1) };
    (wins, n, p)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

fn distance2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Leave-one-out k-nearest-neighbour accuracy. Votes are tallied over the
/// `k` nearest other points; ties go to the label of the nearest tied voter.
pub fn knn_loo_accuracy(points: &[Vec<f64>], labels: &[String], k: usize) -> f64 {
    let n = points.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut correct = 0;
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (distance2(&points[i], &points[j]), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let voters = &others[..k.min(others.len())];
        let votes = |label: &str| voters.iter().filter(|(_, j)| labels[*j] == label).count();
        let best = voters.iter().map(|(_, j)| votes(&labels[*j])).max().unwrap_or(0);
        let predicted = voters.iter().map(|(_, j)| &labels[*j]).find(|l| votes(l) == best);
        if predicted == Some(&labels[i]) {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

/// Rank correlation between `target` and its least-squares affine fit from
/// `points`, i.e. along the single best linear projection of the points.
pub fn projection_rank_correlation(points: &[Vec<f64>], target: &[f64]) -> f64 {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n <= d + 1 {
        return f64::NAN;
    }
    let design = DMatrix::from_fn(n, d + 1, |r, c| if c == d { 1.0 } else { points[r][c] });
    let y = DVector::from_column_slice(target);
    let Ok(coef) = design.clone().svd(true, true).solve(&y, 1e-12) else {
        return f64::NAN;
    };
    let fitted = design * coef;
    spearman(fitted.as_slice(), target)
}
