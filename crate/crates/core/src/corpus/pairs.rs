//! Mining ranked pairs from stories that share a prompt.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::Story;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RankedPair {
    pub prompt_id: String,
    pub high_id: String,
    pub low_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Stories with at least this many upvotes are "high".
    pub high_min: i64,
    /// Stories with at most this many upvotes are "low".
    pub low_max: i64,
    /// Optional cap on pairs per prompt; the kept pairs are a seeded sample.
    pub max_pairs_per_prompt: Option<usize>,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            high_min: 50,
            low_max: 0,
            max_pairs_per_prompt: None,
        }
    }
}

/// Every high story paired with every low story of the same prompt. Output
/// is sorted by prompt, then high id, then low id, so it does not depend on
/// input order.
pub fn build_pairs(stories: &[Story], cfg: &PairConfig, seed: u64) -> Vec<RankedPair> {
    let mut by_prompt: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for s in stories {
        let entry = by_prompt.entry(&s.prompt_id).or_default();
        if s.upvotes >= cfg.high_min {
            entry.0.push(&s.id);
        } else if s.upvotes <= cfg.low_max {
            entry.1.push(&s.id);
        }
    }
    let mut out = Vec::new();
    for (prompt, (mut highs, mut lows)) in by_prompt {
        highs.sort_unstable();
        lows.sort_unstable();
        let mut pairs: Vec<RankedPair> = highs
            .iter()
            .flat_map(|h| {
                lows.iter().map(move |l| RankedPair {
                    prompt_id: prompt.to_string(),
                    high_id: h.to_string(),
                    low_id: l.to_string(),
                })
            })
            .collect();
        if let Some(cap) = cfg.max_pairs_per_prompt {
            if pairs.len() > cap {
                let mut rng = rng::stream(seed, &format!("pairs/{prompt}"));
                let mut keep = sample(&mut rng, pairs.len(), cap).into_vec();
                keep.sort_unstable();
                pairs = keep.into_iter().map(|i| pairs[i].clone()).collect();
            }
        }
        out.extend(pairs);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn story(id: &str, prompt: &str, upvotes: i64) -> Story {
        Story {
            id: id.into(),
            prompt_id: prompt.into(),
            prompt: String::new(),
            text: String::new(),
            upvotes,
            created_at: "2019-01-01".parse().unwrap(),
            word_count: 0,
            comments: vec![],
        }
    }

    #[test]
    fn thresholds_and_middle_band() {
        let s = [
            story("A", "p", 120),
            story("B", "p", -2),
            story("C", "p", 10),
        ];
        let pairs = build_pairs(&s, &PairConfig::default(), 0);
        assert_eq!(
            pairs,
            vec![RankedPair {
                prompt_id: "p".into(),
                high_id: "A".into(),
                low_id: "B".into()
            }]
        );
    }

    #[test]
    fn cartesian_count_and_missing_side() {
        let s = [
            story("h1", "p", 50),
            story("h2", "p", 60),
            story("l1", "p", 0),
            story("l2", "p", -1),
            story("l3", "p", -9),
            story("h3", "q", 70),
        ];
        let pairs = build_pairs(&s, &PairConfig::default(), 0);
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|p| p.prompt_id == "p"));
    }

    #[test]
    fn cap_is_a_deterministic_subset() {
        let mut s: Vec<Story> = (0..4).map(|i| story(&format!("h{i}"), "p", 99)).collect();
        s.extend((0..4).map(|i| story(&format!("l{i}"), "p", -1)));
        let cfg = PairConfig {
            max_pairs_per_prompt: Some(5),
            ..Default::default()
        };
        let a = build_pairs(&s, &cfg, 7);
        assert_eq!(a.len(), 5);
        assert_eq!(a, build_pairs(&s, &cfg, 7));
        let all = build_pairs(&s, &PairConfig::default(), 7);
        assert!(a.iter().all(|p| all.contains(p)));
    }
}
