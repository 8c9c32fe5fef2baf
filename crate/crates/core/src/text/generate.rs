//! Greedy and beam-search comment decoding.

use serde::{Deserialize, Serialize};

use super::vocab::{BOS_ID, EOS_ID};
use super::StoryModel;
use crate::error::Result;
use crate::neural::{Scalar, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum DecodeStrategy {
    Greedy,
    Beam { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DecodeFields")]
pub struct DecodeConfig {
    #[serde(flatten)]
    pub strategy: DecodeStrategy,
    pub max_new_tokens: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: DecodeStrategy::Greedy,
            max_new_tokens: 48,
        }
    }
}

/// Loose form of [`DecodeConfig`] so config files can omit any field.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeFields {
    strategy: Option<String>,
    width: Option<usize>,
    max_new_tokens: Option<usize>,
}

impl TryFrom<DecodeFields> for DecodeConfig {
    type Error = String;

    fn try_from(f: DecodeFields) -> std::result::Result<Self, String> {
        let strategy = match (f.strategy.as_deref(), f.width) {
            (None | Some("greedy"), None) => DecodeStrategy::Greedy,
            (None | Some("beam"), Some(width)) => DecodeStrategy::Beam { width },
            (Some("beam"), None) => return Err("beam decoding needs a width".into()),
            (Some("greedy"), Some(_)) => return Err("greedy decoding takes no width".into()),
            (Some(other), _) => return Err(format!("unknown decode strategy {other:?}")),
        };
        Ok(Self {
            strategy,
            max_new_tokens: f.max_new_tokens.unwrap_or(Self::default().max_new_tokens),
        })
    }
}

struct Memory<S: Scalar> {
    states: Tensor<S>,
    valid: Vec<bool>,
}

fn encode_memory<S: Scalar>(
    model: &StoryModel<S>,
    story_ids: &[usize],
    aspect: usize,
) -> Result<Memory<S>> {
    let mut tape = Tape::new(model.params());
    let (states, valid) = model.forward_comment_memory(&mut tape, story_ids, aspect, &mut None)?;
    tape.check()?;
    Ok(Memory {
        states: tape.value(states).clone(),
        valid,
    })
}

/// Log-probabilities of the next token after `prefix`.
fn next_log_probs<S: Scalar>(
    model: &StoryModel<S>,
    memory: &Memory<S>,
    prefix: &[usize],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(model.params());
    let mem = tape.constant(memory.states.clone());
    let logits = model.forward_decoder(&mut tape, mem, &memory.valid, prefix, &mut None)?;
    tape.check()?;
    let (rows, v) = tape.value(logits).dims2();
    let last: Vec<f64> = tape.value(logits).data()[(rows - 1) * v..]
        .iter()
        .map(|x| x.f64())
        .collect();
    let max = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = last.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    Ok(last.into_iter().map(|x| x - lse).collect())
}

/// Index of the largest value; ties go to the lower index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Generates a comment for `aspect`. Returns the generated ids without
/// `<bos>` and without the terminating `<eos>`.
pub fn generate_comment<S: Scalar>(
    model: &StoryModel<S>,
    story_ids: &[usize],
    aspect: usize,
    cfg: &DecodeConfig,
) -> Result<Vec<usize>> {
    let memory = encode_memory(model, story_ids, aspect)?;
    // The decoder sees at most max_comment_len positions including <bos>.
    let limit = cfg
        .max_new_tokens
        .min(model.config().max_comment_len.saturating_sub(1));
    match cfg.strategy {
        DecodeStrategy::Greedy => greedy(model, &memory, limit),
        DecodeStrategy::Beam { width } => beam(model, &memory, limit, width.max(1)),
    }
}

fn greedy<S: Scalar>(
    model: &StoryModel<S>,
    memory: &Memory<S>,
    limit: usize,
) -> Result<Vec<usize>> {
    let mut seq = vec![BOS_ID];
    for _ in 0..limit {
        let lp = next_log_probs(model, memory, &seq)?;
        let next = argmax(&lp);
        if next == EOS_ID {
            break;
        }
        seq.push(next);
    }
    Ok(seq[1..].to_vec())
}

#[derive(Clone)]
struct Hypothesis {
    ids: Vec<usize>,
    score: f64,
}

fn beam<S: Scalar>(
    model: &StoryModel<S>,
    memory: &Memory<S>,
    limit: usize,
    width: usize,
) -> Result<Vec<usize>> {
    let mut live = vec![Hypothesis {
        ids: vec![BOS_ID],
        score: 0.0,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..limit {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let lp = next_log_probs(model, memory, &hyp.ids)?;
            candidates.extend(
                lp.iter()
                    .enumerate()
                    .map(|(tok, &l)| (hyp.score + l, h, tok)),
            );
        }
        // Highest score first; ties by earlier hypothesis, then lower token.
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite scores")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next = Vec::with_capacity(width);
        for (score, h, tok) in candidates.into_iter().take(width) {
            let mut ids = live[h].ids.clone();
            if tok == EOS_ID {
                done.push(Hypothesis { ids, score });
            } else {
                ids.push(tok);
                next.push(Hypothesis { ids, score });
            }
        }
        live = next;
        let best_done = done
            .iter()
            .map(|h| h.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let best_live = live
            .iter()
            .map(|h| h.score)
            .fold(f64::NEG_INFINITY, f64::max);
        // Scores only decrease as hypotheses grow.
        if live.is_empty() || best_done >= best_live {
            break;
        }
    }
    done.extend(live);
    let best = done
        .into_iter()
        .reduce(|a, b| if b.score > a.score { b } else { a })
        .expect("at least one hypothesis");
    Ok(best.ids[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{ModelConfig, Vocabulary};

    fn model() -> (StoryModel<f64>, Vec<usize>) {
        let vocab = Vocabulary::from_words(&["a", "b", "c", "d", "e"], 3).unwrap();
        let mut cfg = ModelConfig::tiny(vocab.len(), 3);
        cfg.max_comment_len = 8;
        let m = StoryModel::new(cfg, 11).unwrap();
        let ids = vocab.tokenize("a b c d e a b", 64).unwrap();
        (m, ids)
    }

    #[test]
    fn greedy_is_deterministic() {
        let (m, ids) = model();
        let cfg = DecodeConfig::default();
        let a = generate_comment(&m, &ids, 1, &cfg).unwrap();
        let b = generate_comment(&m, &ids, 1, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 7);
    }

    #[test]
    fn beam_of_one_equals_greedy() {
        let (m, ids) = model();
        for aspect in 0..3 {
            let g = generate_comment(&m, &ids, aspect, &DecodeConfig::default()).unwrap();
            let b = generate_comment(
                &m,
                &ids,
                aspect,
                &DecodeConfig {
                    strategy: DecodeStrategy::Beam { width: 1 },
                    max_new_tokens: 48,
                },
            )
            .unwrap();
            assert_eq!(g, b);
        }
    }

    #[test]
    fn invalid_aspect_is_rejected() {
        let (m, ids) = model();
        assert!(generate_comment(&m, &ids, 3, &DecodeConfig::default()).is_err());
    }
}
