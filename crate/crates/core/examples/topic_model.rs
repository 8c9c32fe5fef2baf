//! Picks the number of comment topics by UMass coherence and prints the
//! top words of the chosen model.

use storyer::aspects::{lda_fit, select_num_topics, LdaConfig};
use storyer::corpus::synth::topic_corpus;

fn main() -> storyer::Result<()> {
    let docs: Vec<Vec<String>> = topic_corpus(4, 200, 20, 0.85, 1)
        .iter()
        .map(|d| d.split(' ').map(str::to_string).collect())
        .collect();
    let cfg = LdaConfig {
        iterations: 200,
        ..Default::default()
    };
    let sel = select_num_topics(&docs, &[2, 4, 6], &cfg, 8, 0)?;
    for (t, score) in &sel.scores {
        println!("{t} topics: coherence {score:.3}");
    }
    let model = lda_fit(&docs, sel.best, &cfg, 0)?;
    for t in 0..sel.best {
        println!("topic {t}: {}", model.top_words(t, 6).join(" "));
    }
    Ok(())
}
