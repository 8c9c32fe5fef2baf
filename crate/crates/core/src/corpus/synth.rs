//! Generated corpora with known structure, for desk-scale experiments.
//!
//! Stories come in one high and one low version per prompt. High stories
//! draw extra words from a "good" marker list and low stories from a "bad"
//! one, so preference is learnable from word statistics alone. Each story
//! also mentions cue words for three aspects; crowd-style comments rate
//! those aspects, high stories favourably and low stories poorly.

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{word_count, Story};
use crate::aspects::{rating_from_class, CommentRecord, CommentSource};
use crate::rng::{self, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub prompts: usize,
    pub sentences_per_story: usize,
    pub words_per_sentence: usize,
    /// Probability that a word slot holds a marker of the story's class.
    pub signal_rate: f64,
    /// Probability that a word slot holds a marker of the opposite class.
    pub noise_rate: f64,
    /// Probability that a word slot holds a prompt topic word.
    pub topic_rate: f64,
    pub filler_words: usize,
    pub num_aspects: usize,
    pub aspects_per_story: usize,
    /// Extra annotated stories outside every ranking pair (middle-band
    /// upvotes), alternating high and low quality.
    pub extra_annotated: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            prompts: 500,
            sentences_per_story: 6,
            words_per_sentence: 8,
            signal_rate: 0.1,
            noise_rate: 0.03,
            topic_rate: 0.15,
            filler_words: 200,
            num_aspects: 10,
            aspects_per_story: 3,
            extra_annotated: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub stories: Vec<Story>,
    /// One crowd comment per selected aspect of every story.
    pub comments: Vec<CommentRecord>,
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pronounceable pseudo-word number `i`, three syllables.
pub fn pseudo_word(i: usize) -> String {
    let syl = |n: usize| format!("{}{}", ONSETS[n % 12], VOWELS[(n / 12) % 5]);
    format!(
        "{}{}{}",
        syl(i % 60),
        syl((i / 60) % 60),
        syl((i / 3600 + 7 * i) % 60)
    )
}

/// Disjoint word lists carved out of the pseudo-word sequence.
struct Lexicon {
    filler: Vec<String>,
    good: Vec<String>,
    bad: Vec<String>,
    topics: Vec<String>,
    cues: Vec<Vec<String>>,
}

impl Lexicon {
    fn new(cfg: &SynthConfig) -> Self {
        let mut next = 0;
        let mut take = |n: usize| -> Vec<String> {
            let v = (next..next + n).map(pseudo_word).collect();
            next += n;
            v
        };
        Self {
            filler: take(cfg.filler_words),
            good: take(20),
            bad: take(20),
            topics: take(100),
            cues: (0..cfg.num_aspects).map(|_| take(2)).collect(),
        }
    }
}

const PRAISE: [[&str; 3]; 5] = [
    ["awful", "dreadful", "terrible"],
    ["weak", "flat", "dull"],
    ["okay", "average", "passable"],
    ["good", "solid", "engaging"],
    ["brilliant", "wonderful", "superb"],
];

const TEMPLATES: [&str; 3] = [
    "the {cue} part felt {adj} to me",
    "i thought the {cue} was {adj} overall",
    "honestly the {cue} here is {adj}",
];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn story_text(
    cfg: &SynthConfig,
    lex: &Lexicon,
    high: bool,
    topic: &[String],
    aspects: &[usize],
    rng: &mut SeededRng,
) -> String {
    let (own, other) = if high {
        (&lex.good, &lex.bad)
    } else {
        (&lex.bad, &lex.good)
    };
    let slots = cfg.sentences_per_story * cfg.words_per_sentence;
    let mut words: Vec<String> = (0..slots)
        .map(|_| {
            let u: f64 = rng.random();
            let list = if u < cfg.signal_rate {
                own
            } else if u < cfg.signal_rate + cfg.noise_rate {
                other
            } else if u < cfg.signal_rate + cfg.noise_rate + cfg.topic_rate {
                topic
            } else {
                &lex.filler
            };
            list.choose(rng).expect("non-empty list").clone()
        })
        .collect();
    for &a in aspects {
        let at = rng.random_range(0..slots);
        words[at] = lex.cues[a].choose(rng).expect("cue").clone();
    }
    words
        .chunks(cfg.words_per_sentence)
        .map(|s| {
            let mut s = s.to_vec();
            s[0] = capitalize(&s[0]);
            format!("{}.", s.join(" "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds `cfg.prompts` prompts with one high (upvotes 50..=500) and one
/// low (upvotes -5..=0) story each, then the extra annotated stories.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> SynthCorpus {
    let lex = Lexicon::new(cfg);
    let mut rng = rng::stream(seed, "synth");
    let base = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let mut stories = Vec::with_capacity(2 * cfg.prompts);
    let mut comments = Vec::new();
    let items = (0..cfg.prompts)
        .flat_map(|p| [(format!("p{p:04}"), true), (format!("p{p:04}"), false)])
        .chain((0..cfg.extra_annotated).map(|i| (format!("a{i:04}"), i % 2 == 0)));
    let mut topic: Vec<String> = Vec::new();
    for (prompt, high) in items {
        if high || prompt.starts_with('a') {
            topic = sample(&mut rng, lex.topics.len(), 5)
                .into_iter()
                .map(|i| lex.topics[i].clone())
                .collect();
        }
        let extra = prompt.starts_with('a');
        let k = cfg.aspects_per_story.min(cfg.num_aspects);
        let mut aspects = sample(&mut rng, cfg.num_aspects, k).into_vec();
        aspects.sort_unstable();
        let text = story_text(cfg, &lex, high, &topic, &aspects, &mut rng);
        let id = format!("{prompt}-{}", if high { "h" } else { "l" });
        for &a in &aspects {
            let class: u8 = if high {
                rng.random_range(4..=5)
            } else {
                rng.random_range(1..=2)
            };
            let adj = PRAISE[usize::from(class - 1)]
                .choose(&mut rng)
                .expect("adjective");
            let text = TEMPLATES
                .choose(&mut rng)
                .expect("template")
                .replace("{cue}", &lex.cues[a][0])
                .replace("{adj}", adj);
            comments.push(CommentRecord {
                story_id: id.clone(),
                aspect: Some(a),
                rating: Some(rating_from_class(class).expect("class in range")),
                text,
                source: CommentSource::Crowd,
            });
        }
        stories.push(Story {
            id,
            prompt_id: prompt.clone(),
            prompt: topic.join(" "),
            upvotes: match (extra, high) {
                (true, _) => rng.random_range(1..=49),
                (false, true) => rng.random_range(50..=500),
                (false, false) => rng.random_range(-5..=0),
            },
            created_at: base + chrono::Days::new(rng.random_range(0..365)),
            word_count: word_count(&text),
            text,
            comments: vec![],
        });
    }
    SynthCorpus { stories, comments }
}

/// Comment-like documents over `num_topics` planted topics. Each topic owns
/// eight words; a document draws `dominance` of its words from its own
/// topic and the rest uniformly from all topics.
pub fn topic_corpus(
    num_topics: usize,
    docs: usize,
    words_per_doc: usize,
    dominance: f64,
    seed: u64,
) -> Vec<String> {
    let mut rng = rng::stream(seed, "topics");
    let vocab: Vec<Vec<String>> = (0..num_topics)
        .map(|t| (0..8).map(|j| pseudo_word(1000 + 8 * t + j)).collect())
        .collect();
    (0..docs)
        .map(|d| {
            let own = d % num_topics;
            (0..words_per_doc)
                .map(|_| {
                    let t = if rng.random::<f64>() < dominance {
                        own
                    } else {
                        rng.random_range(0..num_topics)
                    };
                    vocab[t].choose(&mut rng).expect("topic words").as_str()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_pairs, split_sentences, PairConfig};
    use std::collections::HashSet;

    #[test]
    fn pseudo_words_are_distinct_and_plain() {
        let words: HashSet<String> = (0..2000).map(pseudo_word).collect();
        assert_eq!(words.len(), 2000);
        assert!(words
            .iter()
            .all(|w| w.len() == 6 && w.chars().all(|c| c.is_ascii_lowercase())));
        assert!(words.iter().all(|w| !crate::text::is_stopword(w)));
    }

    #[test]
    fn one_pair_per_prompt() {
        let cfg = SynthConfig {
            prompts: 20,
            ..Default::default()
        };
        let c = synth_corpus(&cfg, 3);
        assert_eq!(c.stories.len(), 40);
        assert_eq!(build_pairs(&c.stories, &PairConfig::default(), 0).len(), 20);
        assert_eq!(c.comments.len(), 40 * 3);
        assert!(c
            .stories
            .iter()
            .all(|s| split_sentences(&s.text).len() == 6 && s.word_count == 48));
        assert_eq!(c, synth_corpus(&cfg, 3));
    }

    #[test]
    fn markers_separate_classes() {
        let cfg = SynthConfig {
            prompts: 200,
            ..Default::default()
        };
        let lex = Lexicon::new(&cfg);
        let c = synth_corpus(&cfg, 1);
        let count = |text: &str, list: &[String]| {
            text.split_whitespace()
                .filter(|w| {
                    list.iter()
                        .any(|m| w.trim_end_matches('.').eq_ignore_ascii_case(m))
                })
                .count() as f64
        };
        let margin = |s: &Story| count(&s.text, &lex.good) - count(&s.text, &lex.bad);
        let right = c
            .stories
            .chunks(2)
            .filter(|p| margin(&p[0]) > margin(&p[1]))
            .count();
        // Counting markers alone orders most but not all pairs.
        assert!((0.85..1.0).contains(&(right as f64 / 200.0)), "{right}");
    }

    #[test]
    fn topic_documents_are_dominated() {
        let docs = topic_corpus(4, 8, 30, 0.9, 2);
        assert_eq!(docs.len(), 8);
        assert!(docs.iter().all(|d| d.split(' ').count() == 30));
    }
}
