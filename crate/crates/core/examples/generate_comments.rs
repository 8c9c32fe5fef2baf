//! Fits the comment decoder to a few story/comment pairs and decodes them
//! back greedily and with beam search.

use storyer::metrics::{corpus_perplexity, CommentExample};
use storyer::neural::{AdamWConfig, OptimizerState, Tape};
use storyer::objectives::graph;
use storyer::text::{
    generate_comment, DecodeConfig, DecodeStrategy, ModelConfig, StoryModel, Vocabulary,
};

fn main() -> storyer::Result<()> {
    let data = [
        ("A ship sails at dawn.", 0, "the opening image is vivid"),
        ("The bells ring at night.", 1, "the dialogue sounds stiff"),
        ("Rain falls on the harbor.", 2, "a quiet and sad ending"),
    ];
    let texts = data.iter().flat_map(|(s, _, c)| [*s, *c]);
    let vocab = Vocabulary::build(texts, 1000, 3)?;
    let cfg = ModelConfig::tiny(vocab.len(), 3);
    let mut model = StoryModel::<f32>::new(cfg.clone(), 0)?;
    let examples = data
        .iter()
        .map(|(s, a, c)| {
            Ok(CommentExample {
                story_ids: vocab.tokenize(s, cfg.max_len)?,
                aspect: *a,
                comment_ids: vocab.comment_ids(c, cfg.max_comment_len)?,
            })
        })
        .collect::<storyer::Result<Vec<_>>>()?;

    let lr = 3e-3;
    let mut opt = OptimizerState::new(
        AdamWConfig {
            lr,
            weight_decay: 0.0,
            ..Default::default()
        },
        model.params(),
    );
    for step in 0..150 {
        let grads = {
            let mut tape = Tape::new(model.params());
            let mut terms = Vec::new();
            for e in &examples {
                terms.push(model.forward_comment_nll(
                    &mut tape,
                    &e.story_ids,
                    e.aspect,
                    &e.comment_ids,
                    &mut None,
                )?);
            }
            let loss = graph::mean_of(&mut tape, &terms).expect("non-empty");
            tape.backward(loss)?
        };
        model.params_mut().zero_grad();
        model.params_mut().accumulate(&grads);
        opt.step(model.params_mut(), lr)?;
        if step % 50 == 0 {
            println!(
                "step {step:>3} perplexity {:.2}",
                corpus_perplexity(&model, &examples)?
            );
        }
    }

    let beam = DecodeConfig {
        strategy: DecodeStrategy::Beam { width: 3 },
        ..Default::default()
    };
    for e in &examples {
        let greedy = generate_comment(&model, &e.story_ids, e.aspect, &DecodeConfig::default())?;
        let beamed = generate_comment(&model, &e.story_ids, e.aspect, &beam)?;
        println!(
            "aspect {}: {} | {}",
            e.aspect,
            vocab.decode(&greedy),
            vocab.decode(&beamed)
        );
    }
    Ok(())
}
