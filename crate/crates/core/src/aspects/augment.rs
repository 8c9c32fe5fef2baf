//! Confidence-filtered pseudo-labeling of unlabeled comments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::classifier::CommentScorer;
use super::records::{rating_from_class, CommentRecord, CommentSource, RawComment};
use crate::corpus::word_count;
use crate::error::{Error, Result};
use crate::metrics::top_k;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Kept comments need a top aspect probability strictly above this.
    pub min_confidence: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub per_aspect_cap: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.9,
            min_words: 15,
            max_words: 50,
            per_aspect_cap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooShort,
    TooLong,
    LowConfidence,
    AspectCap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentAudit {
    pub seen: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub kept_per_aspect: BTreeMap<usize, usize>,
}

/// Labels every comment that passes the length and confidence filters with
/// its most likely aspect and sentiment. Input order is preserved, so the
/// per-aspect cap keeps the earliest comments.
pub fn augment_comments(
    raw: &[RawComment],
    aspects: &dyn CommentScorer,
    sentiment: &dyn CommentScorer,
    cfg: &AugmentConfig,
) -> Result<(Vec<CommentRecord>, AugmentAudit)> {
    if sentiment.num_classes() != 5 {
        return Err(Error::contract(
            "the sentiment scorer must have five classes",
        ));
    }
    let mut audit = AugmentAudit {
        seen: raw.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for c in raw {
        let words = word_count(&c.text);
        let reason = if words < cfg.min_words {
            Some(DropReason::TooShort)
        } else if words > cfg.max_words {
            Some(DropReason::TooLong)
        } else {
            None
        };
        if let Some(r) = reason {
            *audit.dropped.entry(r).or_default() += 1;
            continue;
        }
        let p = aspects.probabilities(&c.text)?;
        let aspect = top_k(&p, 1)[0];
        if p[aspect] <= cfg.min_confidence {
            *audit.dropped.entry(DropReason::LowConfidence).or_default() += 1;
            continue;
        }
        let kept = audit.kept_per_aspect.entry(aspect).or_default();
        if cfg.per_aspect_cap.is_some_and(|cap| *kept >= cap) {
            *audit.dropped.entry(DropReason::AspectCap).or_default() += 1;
            continue;
        }
        *kept += 1;
        let s = sentiment.probabilities(&c.text)?;
        let class = top_k(&s, 1)[0] as u8 + 1;
        out.push(CommentRecord {
            story_id: c.story_id.clone(),
            aspect: Some(aspect),
            rating: Some(rating_from_class(class)?),
            text: c.text.clone(),
            source: CommentSource::Augmented,
        });
    }
    audit.kept = out.len();
    Ok((out, audit))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reads the label from the first word: "a3" means aspect 3 with the
    /// second word's confidence, "s4" is sentiment class 4.
    struct Keyed(usize);

    impl CommentScorer for Keyed {
        fn num_classes(&self) -> usize {
            self.0
        }

        fn probabilities(&self, text: &str) -> Result<Vec<f64>> {
            let mut w = text.split_whitespace();
            let k: usize = w.next().unwrap()[1..].parse().unwrap();
            let conf: f64 = w.next().unwrap().parse().unwrap();
            let rest = (1.0 - conf) / (self.0 - 1) as f64;
            let mut p = vec![rest; self.0];
            p[k % self.0] = conf;
            Ok(p)
        }
    }

    fn comment(k: usize, conf: f64, words: usize) -> RawComment {
        let filler = vec!["word"; words - 2].join(" ");
        RawComment {
            story_id: "s".into(),
            text: format!("a{k} {conf} {filler}"),
        }
    }

    #[test]
    fn filters_and_labels() {
        let raw = vec![
            comment(3, 0.95, 20),
            comment(3, 0.9, 20),
            comment(1, 0.99, 14),
            comment(1, 0.99, 15),
            comment(1, 0.99, 50),
            comment(1, 0.99, 51),
        ];
        let (kept, audit) =
            augment_comments(&raw, &Keyed(10), &Keyed(5), &AugmentConfig::default()).unwrap();
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[0].aspect, Some(3));
        // Sentiment class is (3 % 5) + 1 = 4.
        assert_eq!(kept[0].rating, Some(0.75));
        assert_eq!(audit.dropped[&DropReason::LowConfidence], 1);
        assert_eq!(audit.dropped[&DropReason::TooShort], 1);
        assert_eq!(audit.dropped[&DropReason::TooLong], 1);
        assert!(kept.iter().all(|r| r.source == CommentSource::Augmented));
    }

    #[test]
    fn per_aspect_cap_keeps_earliest() {
        let raw: Vec<RawComment> = (0..5).map(|_| comment(2, 0.99, 20)).collect();
        let cfg = AugmentConfig {
            per_aspect_cap: Some(2),
            ..Default::default()
        };
        let (kept, audit) = augment_comments(&raw, &Keyed(10), &Keyed(5), &cfg).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(audit.dropped[&DropReason::AspectCap], 3);
        assert_eq!(audit.kept_per_aspect[&2], 2);
    }
}
