//! Trains the aspect and sentiment classifiers on synthetic crowd comments,
//! then pseudo-labels the same texts as if they were unlabeled.

use storyer::aspects::{
    augment_comments, train_aspect_classifier, train_sentiment_scorer, AugmentConfig,
    ClassifierConfig, CommentRecord, CommentSource, RawComment,
};
use storyer::corpus::synth::{synth_corpus, SynthConfig};

fn main() -> storyer::Result<()> {
    let synth = SynthConfig {
        prompts: 40,
        num_aspects: 4,
        ..Default::default()
    };
    let mut corpus = synth_corpus(&synth, 2);
    // Generated ratings are polar; add a few neutral crowd comments so every
    // sentiment class has examples.
    for (i, text) in [
        "the middle was fine",
        "an ordinary ending",
        "average pacing overall",
    ]
    .iter()
    .enumerate()
    {
        corpus.comments.push(CommentRecord {
            story_id: format!("neutral{i}"),
            aspect: Some(i),
            rating: Some(0.5),
            text: text.to_string(),
            source: CommentSource::Crowd,
        });
    }
    let mut cfg = ClassifierConfig::default();
    cfg.model.d_model = 32;
    cfg.model.ffn_dim = 64;
    cfg.epochs = 4;
    let (aspects, report) = train_aspect_classifier(&corpus.comments, synth.num_aspects, &cfg, 0)?;
    println!("aspect classifier: {report:?}");
    let (sentiment, report) = train_sentiment_scorer(&corpus.comments, &cfg, 0)?;
    println!("sentiment scorer: {report:?}");

    let raw: Vec<RawComment> = corpus
        .comments
        .iter()
        .map(|c| RawComment {
            story_id: c.story_id.clone(),
            text: c.text.clone(),
        })
        .collect();
    // Synthetic comments are short, so only the confidence filter applies.
    let cfg = AugmentConfig {
        min_words: 1,
        ..Default::default()
    };
    let (kept, audit) = augment_comments(&raw, &aspects, &sentiment, &cfg)?;
    println!("kept {} of {}: {audit:?}", kept.len(), raw.len());
    Ok(())
}
