//! Latent Dirichlet allocation by collapsed Gibbs sampling, UMass topic
//! coherence, and topic-count selection.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::text::{is_stopword, vocab::segment};

/// Lowercased alphabetic tokens of at least three letters, stopwords
/// removed.
pub fn comment_tokens(text: &str) -> Vec<String> {
    segment(text)
        .into_iter()
        .filter(|w| w.chars().count() >= 3 && w.chars().all(char::is_alphabetic) && !is_stopword(w))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    /// Document-topic prior; `50 / T` when unset.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: 0.01,
            iterations: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    /// `[T][V]` token counts per topic and word.
    pub topic_word: Vec<Vec<u32>>,
    pub topic_totals: Vec<u32>,
    /// `[D][T]` token counts per document and topic.
    pub doc_topic: Vec<Vec<u32>>,
    /// Topic of every token, per document.
    pub assignments: Vec<Vec<u16>>,
}

impl LdaModel {
    /// Smoothed word distribution of topic `t`.
    pub fn phi(&self, t: usize) -> Vec<f64> {
        let v = self.vocab.len() as f64;
        let denom = self.topic_totals[t] as f64 + v * self.beta;
        self.topic_word[t]
            .iter()
            .map(|&c| (c as f64 + self.beta) / denom)
            .collect()
    }

    /// The `n` most probable words of topic `t`; ties go to the earlier
    /// vocabulary entry.
    pub fn top_words(&self, t: usize, n: usize) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.vocab.len()).collect();
        idx.sort_by(|&a, &b| {
            self.topic_word[t][b]
                .cmp(&self.topic_word[t][a])
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(n)
            .map(|i| self.vocab[i].as_str())
            .collect()
    }

    pub fn total_tokens(&self) -> u64 {
        self.topic_totals.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Fits LDA on tokenized documents. Vocabulary order is first appearance.
pub fn lda_fit(
    docs: &[Vec<String>],
    num_topics: usize,
    cfg: &LdaConfig,
    seed: u64,
) -> Result<LdaModel> {
    if num_topics == 0 || num_topics > u16::MAX as usize {
        return Err(Error::contract(format!("invalid topic count {num_topics}")));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut vocab: Vec<String> = Vec::new();
    let words: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| {
            d.iter()
                .map(|w| {
                    *index.entry(w.as_str()).or_insert_with(|| {
                        vocab.push(w.clone());
                        vocab.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    if vocab.is_empty() {
        return Err(Error::contract("empty comment corpus"));
    }
    let t_count = num_topics;
    let v_count = vocab.len();
    let alpha = cfg.alpha.unwrap_or(50.0 / t_count as f64);
    let beta = cfg.beta;
    let vbeta = v_count as f64 * beta;
    let mut rng = rng::stream(seed, "lda");

    let mut topic_word = vec![vec![0u32; v_count]; t_count];
    let mut topic_totals = vec![0u32; t_count];
    let mut doc_topic = vec![vec![0u32; t_count]; docs.len()];
    let mut assignments: Vec<Vec<u16>> = Vec::with_capacity(docs.len());
    for (d, doc) in words.iter().enumerate() {
        let mut z = Vec::with_capacity(doc.len());
        for &w in doc {
            let t = rng.random_range(0..t_count);
            topic_word[t][w] += 1;
            topic_totals[t] += 1;
            doc_topic[d][t] += 1;
            z.push(t as u16);
        }
        assignments.push(z);
    }

    let mut p = vec![0.0f64; t_count];
    for _ in 0..cfg.iterations {
        for (d, doc) in words.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = assignments[d][i] as usize;
                topic_word[old][w] -= 1;
                topic_totals[old] -= 1;
                doc_topic[d][old] -= 1;
                let mut total = 0.0;
                for t in 0..t_count {
                    total += (doc_topic[d][t] as f64 + alpha) * (topic_word[t][w] as f64 + beta)
                        / (topic_totals[t] as f64 + vbeta);
                    p[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(t_count - 1);
                topic_word[new][w] += 1;
                topic_totals[new] += 1;
                doc_topic[d][new] += 1;
                assignments[d][i] = new as u16;
            }
        }
    }
    Ok(LdaModel {
        num_topics,
        alpha,
        beta,
        vocab,
        topic_word,
        topic_totals,
        doc_topic,
        assignments,
    })
}

/// Mean UMass coherence of the topics' `top_n` words:
/// `sum_{i>j} ln((D(w_i, w_j) + 1) / D(w_j))` with document frequencies
/// `D` taken from `docs`.
pub fn umass_coherence(model: &LdaModel, docs: &[Vec<String>], top_n: usize) -> f64 {
    let sets: Vec<HashSet<&str>> = docs
        .iter()
        .map(|d| d.iter().map(String::as_str).collect())
        .collect();
    let df = |a: &str| sets.iter().filter(|s| s.contains(a)).count() as f64;
    let co = |a: &str, b: &str| {
        sets.iter()
            .filter(|s| s.contains(a) && s.contains(b))
            .count() as f64
    };
    let mut total = 0.0;
    for t in 0..model.num_topics {
        let top = model.top_words(t, top_n);
        let mut score = 0.0;
        for i in 1..top.len() {
            for j in 0..i {
                let dj = df(top[j]);
                if dj > 0.0 {
                    score += ((co(top[i], top[j]) + 1.0) / dj).ln();
                }
            }
        }
        total += score;
    }
    total / model.num_topics as f64
}

/// Coherence of each candidate topic count and the chosen one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicSelection {
    pub best: usize,
    pub scores: Vec<(usize, f64)>,
}

/// Fits one model per candidate and keeps the most coherent; ties go to
/// the smaller topic count.
pub fn select_num_topics(
    docs: &[Vec<String>],
    candidates: &[usize],
    cfg: &LdaConfig,
    top_n: usize,
    seed: u64,
) -> Result<TopicSelection> {
    if candidates.is_empty() {
        return Err(Error::contract("no candidate topic counts"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut scores = Vec::with_capacity(sorted.len());
    for &t in &sorted {
        let m = lda_fit(docs, t, cfg, seed)?;
        scores.push((t, umass_coherence(&m, docs, top_n)));
    }
    let best = scores
        .iter()
        .fold(None::<(usize, f64)>, |acc, &(t, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((t, s)),
        })
        .expect("non-empty")
        .0;
    Ok(TopicSelection { best, scores })
}
