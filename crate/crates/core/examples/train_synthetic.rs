//! Trains the preference head on a small synthetic corpus and reports
//! pairwise accuracy on held-out prompts before and after training.

use storyer::corpus::synth::{synth_corpus, SynthConfig};
use storyer::corpus::{build_pairs, split_by_prompt, PairConfig, SplitRatios};
use storyer::metrics::pairwise_accuracy;
use storyer::train::{score_pairs, DataSources, RunConfig, TaskToggles, Trainer, TrainingData};

fn main() -> storyer::Result<()> {
    let seed = 3;
    let corpus = synth_corpus(
        &SynthConfig {
            prompts: 120,
            ..Default::default()
        },
        seed,
    );
    let pairs = build_pairs(&corpus.stories, &PairConfig::default(), seed);
    let ratios = SplitRatios {
        train: 0.6,
        val: 0.1,
        test: 0.3,
    };
    let splits = split_by_prompt(&pairs, ratios, seed)?;

    let mut cfg = RunConfig::desk();
    cfg.seed = seed;
    cfg.model.d_model = 32;
    cfg.model.ffn_dim = 64;
    cfg.train.steps = 60;
    cfg.tasks = TaskToggles::preference_only();
    let data = TrainingData::build(
        DataSources {
            stories: &corpus.stories,
            train_pairs: &splits.train,
            val_pairs: &splits.val,
            held_out_pairs: &splits.test,
            negatives: &[],
            comments: &[],
        },
        &cfg.model,
        None,
    )?;
    let mut trainer = Trainer::new(cfg, data)?;
    let before = score_pairs(trainer.model(), &trainer.data().stories, &splits.test)?;
    trainer.run(|row| {
        if row.step % 20 == 0 {
            println!("step {:>3} loss {:.4}", row.step, row.losses.total);
        }
        Ok(())
    })?;
    let after = score_pairs(
        &trainer.best_model()?,
        &trainer.data().stories,
        &splits.test,
    )?;
    println!(
        "held-out accuracy {:.3} -> {:.3} on {} pairs",
        pairwise_accuracy(&before)?,
        pairwise_accuracy(&after)?,
        splits.test.len()
    );
    Ok(())
}
