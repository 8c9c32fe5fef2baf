//! Coherence-breaking perturbations used as negative stories.

use rand::seq::index::sample;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::word_count;
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};
use crate::text::is_stopword;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    /// Sentence order permuted.
    Shuffle,
    /// One sentence copied over its neighbours.
    Repeat,
    /// A share of content words replaced by random nouns and verbs.
    Substitute,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 3] = [
        NegativeKind::Shuffle,
        NegativeKind::Repeat,
        NegativeKind::Substitute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NegativeKind::Shuffle => "shuffle",
            NegativeKind::Repeat => "repeat",
            NegativeKind::Substitute => "substitute",
        }
    }
}

impl std::str::FromStr for NegativeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NegativeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown perturbation {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeStory {
    pub source_story_id: String,
    pub kind: NegativeKind,
    pub text: String,
}

/// Share of content words replaced by `Substitute`.
pub const SUBSTITUTE_RATE: f64 = 0.15;
/// Allowed relative change in word count.
pub const MAX_LENGTH_DRIFT: f64 = 0.2;
pub const MIN_SENTENCES: usize = 4;

const REPLACEMENTS: &[&str] = &[
    "apple", "bridge", "candle", "desert", "engine", "feather", "garden", "hammer", "island",
    "jacket", "kettle", "ladder", "mirror", "needle", "orchard", "pencil", "quilt", "river",
    "saddle", "tunnel", "umbrella", "violin", "window", "yard", "zipper", "anchor", "basket",
    "carpet", "dolphin", "elbow", "run", "jump", "swim", "paint", "build", "carry", "dance",
    "freeze", "gather", "hurry", "juggle", "knit", "launch", "melt", "nod", "polish", "quarrel",
    "rescue", "sneeze", "travel", "unlock", "wander", "whistle", "yawn", "bake", "climb", "dig",
    "fold", "grin", "hunt",
];

/// Splits text into sentences ending in `.`, `?` or `!` (trailing closing
/// quotes stay with their sentence). An unterminated tail is attached to
/// the last sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    while i < chars.len() {
        cur.push(chars[i]);
        if matches!(chars[i], '.' | '?' | '!') {
            while i + 1 < chars.len()
                && matches!(
                    chars[i + 1],
                    '.' | '?' | '!' | '"' | '\'' | ')' | '\u{201d}'
                )
            {
                i += 1;
                cur.push(chars[i]);
            }
            let s = cur.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            cur.clear();
        }
        i += 1;
    }
    let tail = cur.trim();
    if !tail.is_empty() {
        match out.last_mut() {
            Some(last) => {
                last.push(' ');
                last.push_str(tail);
            }
            None => out.push(tail.to_string()),
        }
    }
    out
}

fn skip(id: &str, reason: impl Into<String>) -> Error {
    Error::Skipped {
        story_id: id.to_string(),
        reason: reason.into(),
    }
}

/// Perturbs `text` into a negative story. Deterministic per
/// `(story_id, text, kind, seed)`; never returns the source text.
pub fn generate_negative(
    story_id: &str,
    text: &str,
    kind: NegativeKind,
    seed: u64,
) -> Result<NegativeStory> {
    let sentences = split_sentences(text);
    if sentences.len() < MIN_SENTENCES {
        return Err(skip(
            story_id,
            format!(
                "{} sentences, need at least {MIN_SENTENCES}",
                sentences.len()
            ),
        ));
    }
    let mut rng = rng::stream(seed, &format!("negative/{}/{story_id}", kind.name()));
    let out = match kind {
        NegativeKind::Shuffle => shuffle(story_id, &sentences, &mut rng)?,
        NegativeKind::Repeat => repeat(story_id, &sentences, &mut rng)?,
        NegativeKind::Substitute => substitute(story_id, text, &mut rng)?,
    };
    let (src, neg) = (word_count(text) as f64, word_count(&out) as f64);
    if (neg - src).abs() > MAX_LENGTH_DRIFT * src {
        return Err(skip(
            story_id,
            "perturbation changes length by more than 20%",
        ));
    }
    debug_assert_ne!(out, text.trim());
    Ok(NegativeStory {
        source_story_id: story_id.to_string(),
        kind,
        text: out,
    })
}

fn shuffle(id: &str, sentences: &[String], rng: &mut SeededRng) -> Result<String> {
    let Some(other) = sentences.iter().position(|s| s != &sentences[0]) else {
        return Err(skip(id, "all sentences are identical"));
    };
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    for _ in 0..64 {
        order.shuffle(rng);
        if order
            .iter()
            .enumerate()
            .any(|(i, &j)| sentences[i] != sentences[j])
        {
            return Ok(order
                .iter()
                .map(|&i| sentences[i].as_str())
                .collect::<Vec<_>>()
                .join(" "));
        }
    }
    // Practically unreachable; a swap of two distinct sentences always works.
    let mut v: Vec<&str> = sentences.iter().map(String::as_str).collect();
    v.swap(0, other);
    Ok(v.join(" "))
}

fn repeat(id: &str, sentences: &[String], rng: &mut SeededRng) -> Result<String> {
    let src_words = sentences.iter().map(|s| word_count(s)).sum::<usize>() as f64;
    let mut anchors: Vec<usize> = (0..sentences.len()).collect();
    anchors.shuffle(rng);
    let copies = rng.random_range(2..=4);
    // Try copy counts from the drawn one downwards, anchors in random order,
    // until the length constraint holds.
    for c in (2..=copies).rev() {
        for &a in &anchors {
            // Nearest distinct neighbours, right side first on equal distance.
            let mut targets: Vec<usize> = (0..sentences.len())
                .filter(|&j| sentences[j] != sentences[a])
                .collect();
            targets.sort_by_key(|&j| (j.abs_diff(a), j < a));
            if targets.len() < c - 1 {
                continue;
            }
            let mut out: Vec<&str> = sentences.iter().map(String::as_str).collect();
            for &j in &targets[..c - 1] {
                out[j] = &sentences[a];
            }
            let words = out.iter().map(|s| word_count(s)).sum::<usize>() as f64;
            if (words - src_words).abs() <= MAX_LENGTH_DRIFT * src_words {
                return Ok(out.join(" "));
            }
        }
    }
    Err(skip(
        id,
        "no sentence can be repeated within the length bound",
    ))
}

fn split_affixes(token: &str) -> (&str, &str, &str) {
    let start = token
        .find(|c: char| c.is_alphanumeric())
        .unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map_or(start, |i| {
            i + token[i..].chars().next().map_or(1, char::len_utf8)
        });
    (&token[..start], &token[start..end], &token[end..])
}

fn is_content_word(core: &str) -> bool {
    !core.is_empty()
        && core.chars().all(|c| c.is_alphabetic() || c == '\'')
        && !is_stopword(&core.to_lowercase())
}

fn substitute(id: &str, text: &str, rng: &mut SeededRng) -> Result<String> {
    let mut tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let eligible: Vec<usize> = (0..tokens.len())
        .filter(|&i| is_content_word(split_affixes(&tokens[i]).1))
        .collect();
    if eligible.is_empty() {
        return Err(skip(id, "no content words to substitute"));
    }
    let n = ((SUBSTITUTE_RATE * eligible.len() as f64).round() as usize).max(1);
    let mut picks = sample(rng, eligible.len(), n).into_vec();
    picks.sort_unstable();
    for p in picks {
        let i = eligible[p];
        let (pre, core, post) = split_affixes(&tokens[i]);
        let lower = core.to_lowercase();
        let choices: Vec<&&str> = REPLACEMENTS.iter().filter(|w| **w != lower).collect();
        let mut word = choices.choose(rng).expect("replacement list").to_string();
        if core.chars().next().is_some_and(char::is_uppercase) {
            let mut c = word.chars();
            word = c
                .next()
                .map(|f| f.to_uppercase().chain(c).collect())
                .unwrap_or_default();
        }
        tokens[i] = format!("{pre}{word}{post}");
    }
    Ok(tokens.join(" "))
}
