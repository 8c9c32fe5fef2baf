//! Rank correlations and a seeded permutation significance test.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::contract(format!(
            "need at least {min} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::contract("non-finite observation"));
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64], what: &str) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "{what}: zero rank variance"
        )));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 3)?;
    pearson(&mid_ranks(x), &mid_ranks(y), "spearman")
}

/// Number of tied pairs, `sum t(t-1)/2` over runs of equal values in a
/// sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that returns the number of inversions.
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            merged.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 2)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let x_ties = tied_pairs(&xs);
    let joint_ties = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut ys);
    let y_ties = tied_pairs(&ys);
    let n0 = n * (n - 1) / 2;
    let denom = ((n0 - x_ties) as f64) * ((n0 - y_ties) as f64);
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "kendall: zero rank variance".into(),
        ));
    }
    let num = n0 as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * swaps as f64;
    Ok((num / denom.sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Spearman,
    Kendall,
}

impl Statistic {
    pub fn compute(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Statistic::Spearman => spearman(x, y),
            Statistic::Kendall => kendall(x, y),
        }
    }
}

/// Significance threshold used for flagging.
pub const SIGNIFICANCE: f64 = 0.01;

/// A correlation with its permutation p-value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Two-sided permutation test: the share of `n_perm` random relabelings of
/// `y` whose statistic is at least as extreme as the observed one, with +1
/// smoothing so the observed labeling counts as one permutation.
pub fn correlation_pvalue(
    x: &[f64],
    y: &[f64],
    statistic: Statistic,
    n_perm: usize,
    seed: u64,
) -> Result<Correlation> {
    check_lengths(x, y, 5)?;
    let observed = statistic.compute(x, y)?;
    let mut rng = rng::stream(seed, "permutation");
    let mut shuffled = y.to_vec();
    let threshold = observed.abs() - 1e-12;
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        shuffled.shuffle(&mut rng);
        if statistic.compute(x, &shuffled)?.abs() >= threshold {
            extreme += 1;
        }
    }
    let p_value = (extreme + 1) as f64 / (n_perm + 1) as f64;
    Ok(Correlation {
        value: observed,
        p_value,
        significant: p_value <= SIGNIFICANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1., 2., 3.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-12);
        let r = spearman(&[1., 2., 3., 4., 5.], &[2., 1., 4., 3., 5.]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn kendall_examples() {
        assert!((kendall(&[1., 2., 3.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-12);
        assert!((kendall(&[1., 2., 3.], &[1., 3., 2.]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((kendall(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[10., 20., 10., 30.]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let x = [1.0; 6];
        let y = [1., 2., 3., 4., 5., 6.];
        assert!(matches!(
            spearman(&x, &y),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            kendall(&x, &y),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            correlation_pvalue(&x, &y, Statistic::Spearman, 10, 0),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn perfect_correlation_is_significant() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        for stat in [Statistic::Spearman, Statistic::Kendall] {
            let c = correlation_pvalue(&x, &x, stat, 10_000, 3).unwrap();
            assert!(c.p_value <= 0.001, "{stat:?} {c:?}");
            assert!(c.significant);
        }
    }

    #[test]
    fn too_few_observations() {
        assert!(correlation_pvalue(
            &[1., 2., 3., 4.],
            &[1., 2., 3., 4.],
            Statistic::Kendall,
            10,
            0
        )
        .is_err());
    }
}
