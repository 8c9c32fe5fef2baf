//! Comment-generation metrics: averaged BLEU-1..4, ROUGE-L and perplexity.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::neural::Scalar;
use crate::text::StoryModel;

fn ngrams<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

/// Brevity penalty against the reference closest in length (shorter wins
/// ties).
fn brevity_penalty<T: AsRef<str>>(hyp_len: usize, references: &[Vec<T>]) -> f64 {
    let closest = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .expect("non-empty references");
    if hyp_len >= closest {
        1.0
    } else {
        (1.0 - closest as f64 / hyp_len as f64).exp()
    }
}

/// Clipped n-gram precision as `(matches, candidates)`.
fn clipped<T: AsRef<str>, U: AsRef<str>>(
    hyp: &[T],
    references: &[Vec<U>],
    n: usize,
) -> (usize, usize) {
    let cand = ngrams(hyp, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in references {
        for (g, c) in ngrams(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, cand.values().sum())
}

/// Mean of the individual BLEU-1..BLEU-4 scores, each `BP * p_n`.
///
/// With `smooth`, an order n >= 2 with no matching n-gram uses
/// `p_n = 1 / (candidates + 1)` instead of zero.
pub fn bleu_avg_with<T: AsRef<str>, U: AsRef<str>>(
    hyp: &[T],
    references: &[Vec<U>],
    smooth: bool,
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::contract("no reference comments"));
    }
    if hyp.is_empty() {
        return Err(Error::contract("empty hypothesis"));
    }
    let bp = brevity_penalty(hyp.len(), references);
    let mut total = 0.0;
    for n in 1..=4 {
        let (m, c) = clipped(hyp, references, n);
        let p = if m == 0 && n >= 2 && smooth {
            1.0 / (c as f64 + 1.0)
        } else if c == 0 {
            0.0
        } else {
            m as f64 / c as f64
        };
        total += bp * p;
    }
    Ok(total / 4.0)
}

/// Smoothed averaged BLEU-1..4.
pub fn bleu_avg<T: AsRef<str>, U: AsRef<str>>(hyp: &[T], references: &[Vec<U>]) -> Result<f64> {
    bleu_avg_with(hyp, references, true)
}

fn lcs_len<T: AsRef<str>, U: AsRef<str>>(a: &[T], b: &[U]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence. Empty input scores 0.
pub fn rouge_l<T: AsRef<str>, U: AsRef<str>>(hyp: &[T], reference: &[U]) -> f64 {
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// One teacher-forced comment: encoder story ids, aspect and
/// `<bos> ... <eos>` comment ids.
#[derive(Clone, Debug)]
pub struct CommentExample {
    pub story_ids: Vec<usize>,
    pub aspect: usize,
    pub comment_ids: Vec<usize>,
}

/// `exp` of the token-weighted mean negative log-likelihood.
pub fn corpus_perplexity<S: Scalar>(
    model: &StoryModel<S>,
    corpus: &[CommentExample],
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::contract("empty comment corpus"));
    }
    let mut sum = 0.0;
    let mut tokens = 0usize;
    for ex in corpus {
        let s = model.teacher_forced_nll(&ex.story_ids, ex.aspect, &ex.comment_ids)?;
        sum += s.sum;
        tokens += s.tokens;
    }
    Ok((sum / tokens as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn bleu_identity_is_one() {
        for s in ["a", "the cat", "the cat sat on the mat"] {
            assert!((bleu_avg(&toks(s), &[toks(s)]).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bleu_hand_value() {
        // Every n-gram of the hypothesis matches; only the brevity penalty
        // exp(1 - 4/3) applies, and the absent 4-gram is smoothed to 1/1.
        let b = bleu_avg(&toks("the cat sat"), &[toks("the cat sat down")]).unwrap();
        assert!((b - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!((b - 0.716531).abs() < 1e-6);
    }

    #[test]
    fn bleu_disjoint() {
        let h = toks("x y z w");
        let r = [toks("a b c d")];
        let s = bleu_avg(&h, &r).unwrap();
        // Orders 2..4 fall back to 1/(3+1), 1/(2+1), 1/(1+1).
        assert!((s - (0.25 + 1.0 / 3.0 + 0.5) / 4.0).abs() < 1e-12);
        assert_eq!(bleu_avg_with(&h, &r, false).unwrap(), 0.0);
        assert!(bleu_avg(&h, &Vec::<Vec<String>>::new()).is_err());
    }

    #[test]
    fn bleu_clips_repeated_words() {
        // Unigram precision 2/7 from the classic "the the the" example.
        let h = toks("the the the the the the the");
        let r = [toks("the cat is on the mat")];
        let (m, c) = clipped(&h, &r, 1);
        assert_eq!((m, c), (2, 7));
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")), 1.0);
        assert_eq!(rouge_l(&toks("a b c"), &toks("x y z")), 0.0);
        assert!((rouge_l(&toks("a b c"), &toks("a x c")) - 2.0 / 3.0).abs() < 1e-12);
    }
}
