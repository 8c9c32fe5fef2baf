//! Filters a synthetic story dump, pairs high- and low-voted stories under
//! each prompt and splits the pairs by prompt.

use storyer::corpus::synth::{synth_corpus, SynthConfig};
use storyer::corpus::{
    build_pairs, dataset_stats, filter_stories, split_by_prompt, FilterConfig, PairConfig,
    SplitRatios,
};

fn main() -> storyer::Result<()> {
    let corpus = synth_corpus(
        &SynthConfig {
            prompts: 30,
            ..Default::default()
        },
        5,
    );
    let filter = FilterConfig {
        min_words: 10,
        ..Default::default()
    };
    let stories = filter_stories(corpus.stories, &filter);
    let pairs = build_pairs(&stories, &PairConfig::default(), 5);
    let splits = split_by_prompt(&pairs, SplitRatios::default(), 5)?;
    println!("{} stories, {} pairs", stories.len(), pairs.len());
    println!(
        "{}",
        serde_json::to_string_pretty(&dataset_stats(&splits, &stories)?)?
    );
    Ok(())
}
