//! Pairwise ranking accuracy, score distance and aspect recall.

use crate::error::{Error, Result};

fn non_empty(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::contract("no scored pairs"));
    }
    Ok(())
}

/// Fraction of `(p_high, p_low)` pairs with `p_high > p_low`. Ties count
/// as wrong.
pub fn pairwise_accuracy(pairs: &[(f64, f64)]) -> Result<f64> {
    non_empty(pairs)?;
    let right = pairs.iter().filter(|(h, l)| h > l).count();
    Ok(right as f64 / pairs.len() as f64)
}

/// Mean signed gap `p_high - p_low`.
pub fn score_distance(pairs: &[(f64, f64)]) -> Result<f64> {
    non_empty(pairs)?;
    Ok(pairs.iter().map(|(h, l)| h - l).sum::<f64>() / pairs.len() as f64)
}

/// Indices of the `k` largest confidences; ties go to the lower index.
pub fn top_k(a_c: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..a_c.len()).collect();
    idx.sort_by(|&a, &b| a_c[b].total_cmp(&a_c[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Share of the selected aspects that appear among the top `k`.
pub fn recall_at_k(a_c: &[f64], selected: &[usize], k: usize) -> Result<f64> {
    if k == 0 || k > a_c.len() {
        return Err(Error::contract(format!("k={k} outside 1..={}", a_c.len())));
    }
    if selected.is_empty() {
        return Err(Error::contract("no selected aspects"));
    }
    let top = top_k(a_c, k);
    let hits = selected.iter().filter(|s| top.contains(s)).count();
    Ok(hits as f64 / selected.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_and_distance() {
        let pairs = [(0.9, 0.2), (0.3, 0.4)];
        assert_eq!(pairwise_accuracy(&pairs).unwrap(), 0.5);
        assert!((score_distance(&pairs).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(pairwise_accuracy(&[(0.6, 0.5), (0.2, 0.1)]).unwrap(), 1.0);
        assert_eq!(pairwise_accuracy(&[(0.5, 0.5)]).unwrap(), 0.0);
        assert_eq!(score_distance(&[(0.5, 0.5), (0.1, 0.1)]).unwrap(), 0.0);
        assert!(pairwise_accuracy(&[]).is_err());
        assert!(score_distance(&[]).is_err());
    }

    #[test]
    fn recall_examples() {
        let a_c = [0.05, 0.2, 0.1, 0.3, 0.1, 0.05, 0.05, 0.05, 0.05, 0.05];
        assert_eq!(recall_at_k(&a_c, &[1, 3], 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&a_c, &[1, 3], 1).unwrap(), 0.5);
        assert!(recall_at_k(&a_c, &[1], 0).is_err());
        assert!(recall_at_k(&a_c, &[], 3).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(top_k(&[0.25, 0.25, 0.5, 0.0], 2), vec![2, 0]);
    }
}
