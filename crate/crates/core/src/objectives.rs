//! Training losses: pairwise margin ranking (with the optional coherence
//! hinge against perturbed negatives), aspect confidence cross-entropy,
//! aspect rating binary cross-entropy, the comment likelihood, their
//! unweighted sum, and the plain cross-entropy discrimination baseline.
//!
//! Every loss exists twice: as a plain `f64` function for reporting and
//! spot checks, and in [`graph`] as a differentiable tape node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Default ranking margin.
pub const DEFAULT_MARGIN: f64 = 0.3;

/// `max(0, p_low - p_high + m)`.
pub fn margin_rank_loss(p_high: f64, p_low: f64, margin: f64) -> f64 {
    (p_low - p_high + margin).max(0.0)
}

/// Coherence hinge: the lowly-voted story must outscore its perturbed
/// negative by the margin.
pub fn coherence_rank_loss(p_low: f64, p_neg: f64, margin: f64) -> f64 {
    margin_rank_loss(p_low, p_neg, margin)
}

/// Preference scores for one ranking example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingScores {
    pub p_high: f64,
    pub p_low: f64,
    pub p_neg: Option<f64>,
}

/// `L_ps`: the ranking hinge, plus the coherence hinge when negatives are
/// enabled.
pub fn preference_loss(scores: &RankingScores, margin: f64, negatives: bool) -> Result<f64> {
    let pref = margin_rank_loss(scores.p_high, scores.p_low, margin);
    match (negatives, scores.p_neg) {
        (false, _) => Ok(pref),
        (true, Some(p_neg)) => Ok(pref + coherence_rank_loss(scores.p_low, p_neg, margin)),
        (true, None) => Err(Error::contract(
            "negative-sample training enabled but the example has no negative story",
        )),
    }
}

fn ln_clamped(x: f64) -> f64 {
    x.max(LOG_EPS).ln()
}

/// `-sum_k y[k] log a_c[k]` with multi-hot, unnormalized targets.
pub fn confidence_loss(a_c: &[f64], y: &[f64]) -> Result<f64> {
    if a_c.len() != y.len() {
        return Err(Error::contract("confidence and target lengths differ"));
    }
    if !y.iter().any(|&t| t > 0.0) {
        return Err(Error::contract("confidence target selects no aspect"));
    }
    Ok(-a_c
        .iter()
        .zip(y)
        .map(|(&a, &t)| if t == 0.0 { 0.0 } else { t * ln_clamped(a) })
        .sum::<f64>())
}

/// Result of [`rating_loss`]. `empty_selection` flags the degenerate case
/// of no selected aspect, where the loss is defined as zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingLoss {
    pub value: f64,
    pub empty_selection: bool,
}

/// Binary cross-entropy summed over the selected aspects only.
pub fn rating_loss(a_r: &[f64], y: &[f64], selected: &[usize]) -> Result<RatingLoss> {
    if a_r.len() != y.len() {
        return Err(Error::contract("rating and target lengths differ"));
    }
    if let Some(&k) = selected.iter().find(|&&k| k >= a_r.len()) {
        return Err(Error::contract(format!("selected aspect {k} out of range")));
    }
    let value = -selected
        .iter()
        .map(|&k| y[k] * ln_clamped(a_r[k]) + (1.0 - y[k]) * ln_clamped(1.0 - a_r[k]))
        .sum::<f64>();
    Ok(RatingLoss {
        value: if selected.is_empty() { 0.0 } else { value },
        empty_selection: selected.is_empty(),
    })
}

/// Binary cross-entropy of a preference score against a 0/1 label, with
/// optional label smoothing.
pub fn discrimination_loss(p_s: f64, label: bool, smoothing: f64) -> f64 {
    let t = smoothed_target(label, smoothing);
    -(t * ln_clamped(p_s) + (1.0 - t) * ln_clamped(1.0 - p_s))
}

fn smoothed_target(label: bool, smoothing: f64) -> f64 {
    if label {
        1.0 - smoothing
    } else {
        smoothing
    }
}

/// Per-step loss components and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ps: f64,
    pub l_ac: f64,
    pub l_ar: f64,
    pub l_c: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recomputes the total in the training precision, in the same order the
    /// trainer adds the components.
    pub fn recompute_total<S: crate::neural::Scalar>(&self) -> f64 {
        let mut acc = S::zero();
        for c in [self.l_ps, self.l_ac, self.l_ar, self.l_c] {
            acc += S::of(c);
        }
        acc.f64()
    }
}

/// Unweighted sum of the four components.
pub fn joint_loss(l_ps: f64, l_ac: f64, l_ar: f64, l_c: f64) -> LossBreakdown {
    LossBreakdown {
        l_ps,
        l_ac,
        l_ar,
        l_c,
        total: ((l_ps + l_ac) + l_ar) + l_c,
    }
}

/// Aspect supervision for one story.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectTarget {
    /// Selected aspect indices, ascending.
    pub selected: Vec<usize>,
    /// Normalized rating per aspect; only selected entries are meaningful.
    pub ratings: Vec<f64>,
}

impl AspectTarget {
    pub fn new(num_aspects: usize, ratings: &[(usize, f64)]) -> Result<Self> {
        let mut selected: Vec<usize> = ratings.iter().map(|&(k, _)| k).collect();
        selected.sort_unstable();
        selected.dedup();
        if selected.len() != ratings.len() {
            return Err(Error::data("aspect selected twice"));
        }
        let mut r = vec![0.0; num_aspects];
        for &(k, v) in ratings {
            if k >= num_aspects {
                return Err(Error::data(format!("aspect {k} out of range")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::data(format!("rating {v} outside [0, 1]")));
            }
            r[k] = v;
        }
        Ok(Self {
            selected,
            ratings: r,
        })
    }

    pub fn num_aspects(&self) -> usize {
        self.ratings.len()
    }

    /// Multi-hot confidence target; optionally normalized to sum to one.
    pub fn confidence_target(&self, normalize: bool) -> Vec<f64> {
        let mut y = vec![0.0; self.ratings.len()];
        let w = if normalize && !self.selected.is_empty() {
            1.0 / self.selected.len() as f64
        } else {
            1.0
        };
        for &k in &self.selected {
            y[k] = w;
        }
        y
    }

    /// Crowd annotations select three to five aspects; augmented ones at
    /// least one.
    pub fn validate(&self, crowd: bool) -> Result<()> {
        let n = self.selected.len();
        let ok = if crowd { (3..=5).contains(&n) } else { n >= 1 };
        if ok {
            Ok(())
        } else {
            Err(Error::data(format!(
                "{} annotation selects {n} aspects",
                if crowd { "crowd" } else { "augmented" }
            )))
        }
    }
}

/// Differentiable versions of the losses above.
pub mod graph {
    use super::LOG_EPS;
    use crate::neural::{Scalar, Tape, Tensor, Var};

    /// `max(0, p_low - p_high + m)` as a scalar node.
    pub fn margin_rank_loss<S: Scalar>(
        tape: &mut Tape<S>,
        p_high: Var,
        p_low: Var,
        margin: f64,
    ) -> Var {
        let gap = tape.sub(p_low, p_high);
        let shifted = tape.add_scalar(gap, margin);
        let hinge = tape.relu(shifted);
        tape.sum(hinge)
    }

    /// `-sum y log a_c` for a `[1, K]` confidence node.
    pub fn confidence_loss<S: Scalar>(tape: &mut Tape<S>, a_c: Var, target: &[f64]) -> Var {
        let y = tape.constant(Tensor::row_vector(target));
        let log_a = tape.log_clamped(a_c, LOG_EPS);
        let prod = tape.mul(y, log_a);
        let s = tape.sum(prod);
        tape.scale(s, -1.0)
    }

    /// Binary cross-entropy over `selected`; `None` when nothing is selected.
    pub fn rating_loss<S: Scalar>(
        tape: &mut Tape<S>,
        a_r: Var,
        ratings: &[f64],
        selected: &[usize],
    ) -> Option<Var> {
        if selected.is_empty() {
            return None;
        }
        let k = ratings.len();
        let mut mask = vec![0.0; k];
        for &i in selected {
            mask[i] = 1.0;
        }
        let pos: Vec<f64> = (0..k).map(|i| mask[i] * ratings[i]).collect();
        let neg: Vec<f64> = (0..k).map(|i| mask[i] * (1.0 - ratings[i])).collect();
        let pos = tape.constant(Tensor::row_vector(&pos));
        let neg = tape.constant(Tensor::row_vector(&neg));
        let log_a = tape.log_clamped(a_r, LOG_EPS);
        let one_minus = tape.one_minus(a_r);
        let log_1ma = tape.log_clamped(one_minus, LOG_EPS);
        let t1 = tape.mul(pos, log_a);
        let t2 = tape.mul(neg, log_1ma);
        let both = tape.add(t1, t2);
        let s = tape.sum(both);
        Some(tape.scale(s, -1.0))
    }

    /// BCE of a `[1, 1]` score against a (smoothed) 0/1 label.
    pub fn discrimination_loss<S: Scalar>(
        tape: &mut Tape<S>,
        p_s: Var,
        label: bool,
        smoothing: f64,
    ) -> Var {
        let t = super::smoothed_target(label, smoothing);
        let log_p = tape.log_clamped(p_s, LOG_EPS);
        let one_minus = tape.one_minus(p_s);
        let log_1mp = tape.log_clamped(one_minus, LOG_EPS);
        let a = tape.scale(log_p, -t);
        let b = tape.scale(log_1mp, -(1.0 - t));
        let both = tape.add(a, b);
        tape.sum(both)
    }

    /// Sums the present components in the fixed order
    /// `L_ps, L_ac, L_ar, L_c`, scaling by `weights` when not one.
    pub fn joint_loss<S: Scalar>(
        tape: &mut Tape<S>,
        components: [Option<Var>; 4],
        weights: [f64; 4],
    ) -> Option<Var> {
        let mut total: Option<Var> = None;
        for (c, w) in components.into_iter().zip(weights) {
            let Some(mut c) = c else { continue };
            if w != 1.0 {
                c = tape.scale(c, w);
            }
            total = Some(match total {
                Some(t) => tape.add(t, c),
                None => c,
            });
        }
        total
    }

    /// Mean of scalar nodes, or `None` for an empty list.
    pub fn mean_of<S: Scalar>(tape: &mut Tape<S>, terms: &[Var]) -> Option<Var> {
        let (&first, rest) = terms.split_first()?;
        let mut acc = first;
        for &t in rest {
            acc = tape.add(acc, t);
        }
        Some(if terms.len() == 1 {
            acc
        } else {
            tape.scale(acc, 1.0 / terms.len() as f64)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{ParamStore, Tape, Tensor};
    use std::f64::consts::LN_2;

    const TOL: f64 = 1e-9;

    #[test]
    fn margin_spot_values() {
        assert_eq!(margin_rank_loss(0.9, 0.2, 0.3), 0.0);
        assert!((margin_rank_loss(0.5, 0.5, 0.3) - 0.3).abs() < TOL);
        assert!((margin_rank_loss(0.4, 0.3, 0.3) - 0.2).abs() < TOL);
    }

    #[test]
    fn coherence_spot_values() {
        assert_eq!(coherence_rank_loss(0.5, 0.1, 0.3), 0.0);
        assert!((coherence_rank_loss(0.5, 0.5, 0.3) - 0.3).abs() < TOL);
        let s = RankingScores {
            p_high: 0.5,
            p_low: 0.5,
            p_neg: Some(0.5),
        };
        assert!((preference_loss(&s, 0.3, true).unwrap() - 0.6).abs() < TOL);
        let no_neg = RankingScores { p_neg: None, ..s };
        assert!(preference_loss(&no_neg, 0.3, true).is_err());
        assert!((preference_loss(&no_neg, 0.3, false).unwrap() - 0.3).abs() < TOL);
    }

    #[test]
    fn confidence_spot_values() {
        let mut one_hot = vec![0.0; 10];
        one_hot[4] = 1.0;
        assert!(confidence_loss(&one_hot, &one_hot).unwrap() <= 1e-11);
        let uniform = vec![0.1; 10];
        let mut y = vec![0.0; 10];
        y[0] = 1.0;
        assert!((confidence_loss(&uniform, &y).unwrap() - 10f64.ln()).abs() < TOL);
        y[3] = 1.0;
        y[7] = 1.0;
        assert!((confidence_loss(&uniform, &y).unwrap() - (-3.0 * 0.1f64.ln())).abs() < TOL);
        assert!(confidence_loss(&uniform, &[0.0; 10]).is_err());
    }

    #[test]
    fn zero_confidence_is_clamped_not_infinite() {
        let a = [1.0, 0.0];
        let y = [0.0, 1.0];
        let l = confidence_loss(&a, &y).unwrap();
        assert!((l - (-LOG_EPS.ln())).abs() < 1e-9);
    }

    #[test]
    fn rating_spot_values() {
        let l = rating_loss(&[0.5], &[0.5], &[0]).unwrap();
        assert!((l.value - LN_2).abs() < TOL);
        let l = rating_loss(&[0.5], &[0.8], &[0]).unwrap();
        assert!((l.value - LN_2).abs() < TOL);
        let l = rating_loss(&[1.0 - 1e-15], &[1.0], &[0]).unwrap();
        assert!(l.value < 1e-12);
        let l = rating_loss(&[0.5, 0.1], &[0.5, 0.9], &[]).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.empty_selection);
    }

    #[test]
    fn unselected_aspects_do_not_contribute() {
        let a = rating_loss(&[0.3, 0.9], &[0.7, 0.0], &[0]).unwrap().value;
        let b = rating_loss(&[0.3, 0.1], &[0.7, 1.0], &[0]).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn joint_spot_values() {
        let j = joint_loss(0.3, 2.3026, 0.6931, 1.0);
        assert!((j.total - 4.2957).abs() < TOL);
        assert_eq!(joint_loss(0.3, 0.0, 0.0, 0.0).total, 0.3);
        assert_eq!(joint_loss(0.0, 0.0, 0.0, 0.0).total, 0.0);
    }

    #[test]
    fn discrimination_spot_values() {
        assert!((discrimination_loss(0.5, true, 0.0) - LN_2).abs() < TOL);
        assert!((discrimination_loss(0.5, true, 0.1) - LN_2).abs() < TOL);
        assert!(discrimination_loss(1.0 - 1e-12, true, 0.0) < 1e-11);
    }

    fn scalar_node(tape: &mut Tape<f64>, v: f64) -> crate::neural::Var {
        tape.constant(Tensor::row_vector(&[v]))
    }

    #[test]
    fn graph_losses_match_scalar_forms() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        for (h, l) in [(0.9, 0.2), (0.5, 0.5), (0.4, 0.3), (0.1, 0.7)] {
            let ph = scalar_node(&mut tape, h);
            let pl = scalar_node(&mut tape, l);
            let n = graph::margin_rank_loss(&mut tape, ph, pl, 0.3);
            assert!((tape.item(n) - margin_rank_loss(h, l, 0.3)).abs() < 1e-15);
        }
        let a_c = [0.05, 0.6, 0.35];
        let y = [0.0, 1.0, 1.0];
        let v = tape.constant(Tensor::row_vector(&a_c));
        let n = graph::confidence_loss(&mut tape, v, &y);
        assert!((tape.item(n) - confidence_loss(&a_c, &y).unwrap()).abs() < 1e-15);

        let a_r = [0.2, 0.7, 0.9];
        let yr = [0.5, 0.25, 1.0];
        let v = tape.constant(Tensor::row_vector(&a_r));
        let n = graph::rating_loss(&mut tape, v, &yr, &[1, 2]).unwrap();
        let want = rating_loss(&a_r, &yr, &[1, 2]).unwrap().value;
        assert!((tape.item(n) - want).abs() < 1e-14);
        assert!(graph::rating_loss(&mut tape, v, &yr, &[]).is_none());

        let p = scalar_node(&mut tape, 0.73);
        let n = graph::discrimination_loss(&mut tape, p, false, 0.1);
        assert!((tape.item(n) - discrimination_loss(0.73, false, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn hinge_gradient_is_minus_one_when_active() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let ph = scalar_node(&mut tape, 0.4);
        let pl = scalar_node(&mut tape, 0.3);
        let n = graph::margin_rank_loss(&mut tape, ph, pl, 0.3);
        // Constants carry no parameter gradient; check the value only here and
        // the derivative through the relu masks below.
        assert!((tape.item(n) - 0.2).abs() < TOL);
    }

    #[test]
    fn joint_graph_respects_order_and_missing_terms() {
        let store = ParamStore::<f32>::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::scalar(0.3));
        let c = tape.constant(Tensor::scalar(1.0));
        let t = graph::joint_loss(&mut tape, [Some(a), None, None, Some(c)], [1.0; 4]).unwrap();
        assert_eq!(tape.item(t), (0.3f32 + 1.0f32) as f64);
        assert!(graph::joint_loss(&mut tape, [None; 4], [1.0; 4]).is_none());
    }

    #[test]
    fn aspect_target_validation() {
        let t = AspectTarget::new(10, &[(1, 0.5), (3, 1.0), (7, 0.0)]).unwrap();
        assert_eq!(t.selected, vec![1, 3, 7]);
        t.validate(true).unwrap();
        let y = t.confidence_target(false);
        assert_eq!(y.iter().sum::<f64>(), 3.0);
        let y = t.confidence_target(true);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let small = AspectTarget::new(10, &[(1, 0.5)]).unwrap();
        assert!(small.validate(true).is_err());
        small.validate(false).unwrap();
        assert!(AspectTarget::new(10, &[(1, 0.5), (1, 0.2)]).is_err());
        assert!(AspectTarget::new(10, &[(11, 0.5)]).is_err());
        assert!(AspectTarget::new(10, &[(1, 1.5)]).is_err());
    }
}
