//! Prompt-disjoint train/validation/test splits and their statistics.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{RankedPair, Story};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x))
            || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(format!(
                "split ratios {r:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items; ties in the remainder go to
/// the earlier split.
pub fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    // The small slack absorbs representation error such as 0.1 * 10 < 1.
    let mut sizes: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - sizes[a] as f64;
        let rb = quotas[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<RankedPair>,
    pub val: Vec<RankedPair>,
    pub test: Vec<RankedPair>,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &[RankedPair]); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }
}

/// Assigns whole prompts to splits by a seeded shuffle of the sorted prompt
/// ids. The result does not depend on the order of `pairs`.
pub fn split_by_prompt(pairs: &[RankedPair], ratios: SplitRatios, seed: u64) -> Result<Splits> {
    ratios.validate()?;
    let mut prompts: Vec<&str> = pairs
        .iter()
        .map(|p| p.prompt_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if prompts.len() < 3 {
        return Err(Error::contract(format!(
            "{} prompts cannot fill three splits",
            prompts.len()
        )));
    }
    prompts.shuffle(&mut rng::stream(seed, "split"));
    let sizes = apportion(prompts.len(), &ratios.as_array());
    let mut which: HashMap<&str, usize> = HashMap::new();
    let mut start = 0;
    for (split, &size) in sizes.iter().enumerate() {
        for p in &prompts[start..start + size] {
            which.insert(p, split);
        }
        start += size;
    }
    let mut sorted = pairs.to_vec();
    sorted.sort();
    let mut out = Splits::default();
    for p in sorted {
        match which[p.prompt_id.as_str()] {
            0 => out.train.push(p),
            1 => out.val.push(p),
            _ => out.test.push(p),
        }
    }
    Ok(out)
}

/// Per-split counts in the layout of the dataset statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub prompts: usize,
    pub high_stories: usize,
    pub low_stories: usize,
    pub mean_words_high: f64,
    pub mean_words_low: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub val: SplitStats,
    pub test: SplitStats,
}

fn mean_words(ids: &BTreeSet<&str>, words: &HashMap<&str, usize>) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    ids.iter().map(|id| words[id] as f64).sum::<f64>() / ids.len() as f64
}

pub fn split_stats(pairs: &[RankedPair], stories: &[Story]) -> Result<SplitStats> {
    let words: HashMap<&str, usize> = stories
        .iter()
        .map(|s| (s.id.as_str(), s.word_count))
        .collect();
    let highs: BTreeSet<&str> = pairs.iter().map(|p| p.high_id.as_str()).collect();
    let lows: BTreeSet<&str> = pairs.iter().map(|p| p.low_id.as_str()).collect();
    if let Some(missing) = highs
        .iter()
        .chain(&lows)
        .find(|id| !words.contains_key(*id))
    {
        return Err(Error::data(format!(
            "pair refers to unknown story {missing}"
        )));
    }
    Ok(SplitStats {
        prompts: pairs
            .iter()
            .map(|p| p.prompt_id.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        high_stories: highs.len(),
        low_stories: lows.len(),
        mean_words_high: mean_words(&highs, &words),
        mean_words_low: mean_words(&lows, &words),
        pairs: pairs.len(),
    })
}

pub fn dataset_stats(splits: &Splits, stories: &[Story]) -> Result<DatasetStats> {
    Ok(DatasetStats {
        train: split_stats(&splits.train, stories)?,
        val: split_stats(&splits.val, stories)?,
        test: split_stats(&splits.test, stories)?,
    })
}
