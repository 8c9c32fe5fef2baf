//! Story-ranking dataset construction: filtering raw stories, mining
//! high/low pairs per prompt, prompt-disjoint splits, and perturbed
//! negative stories.

mod filter;
pub mod negatives;
mod pairs;
mod split;
mod story;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use filter::{filter_stories, FilterConfig, FilterReason};
pub use negatives::{generate_negative, split_sentences, NegativeKind, NegativeStory};
pub use pairs::{build_pairs, PairConfig, RankedPair};
pub use split::{
    apportion, dataset_stats, split_by_prompt, split_stats, DatasetStats, SplitRatios, SplitStats,
    Splits,
};
pub use story::{parse_stories, read_stories, word_count, RawRecord, Reject, Story};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub filter: FilterConfig,
    pub pairs: PairConfig,
    pub ratios: SplitRatios,
}

/// Everything the preparation pipeline produces.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Stories that passed the filters, in input order.
    pub stories: Vec<Story>,
    pub filtered: BTreeMap<FilterReason, usize>,
    pub splits: Splits,
    pub stats: DatasetStats,
}

/// Filter, pair and split. Fails with a data error when no pair survives.
pub fn prepare(stories: Vec<Story>, cfg: &PrepareConfig, seed: u64) -> Result<Prepared> {
    let mut filtered = BTreeMap::new();
    let mut kept = Vec::with_capacity(stories.len());
    for s in stories {
        match cfg.filter.check(&s) {
            Some(reason) => *filtered.entry(reason).or_insert(0) += 1,
            None => kept.push(s),
        }
    }
    let pairs = build_pairs(&kept, &cfg.pairs, seed);
    if pairs.is_empty() {
        return Err(Error::EmptyInput(
            "no ranked pairs: every prompt lacks a high or a low story".into(),
        ));
    }
    let splits = split_by_prompt(&pairs, cfg.ratios, seed).map_err(|e| match e {
        Error::Contract(m) => Error::data(m),
        other => other,
    })?;
    let stats = dataset_stats(&splits, &kept)?;
    Ok(Prepared {
        stories: kept,
        filtered,
        splits,
        stats,
    })
}
