#![allow(dead_code)]

use std::path::{Path, PathBuf};

use storyer::cli::{cmd_prepare, write_jsonl, AppConfig};
use storyer::corpus::synth::{synth_corpus, SynthConfig, SynthCorpus};
use storyer::corpus::{generate_negative, NegativeKind, NegativeStory, SplitRatios};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

/// A synthetic corpus laid out on disk the way the commands expect it:
/// raw stories, prepared pairs, crowd annotations and negatives.
pub struct Workspace {
    pub dir: PathBuf,
    pub corpus: SynthCorpus,
    pub config: AppConfig,
}

impl Workspace {
    pub fn new(dir: &Path, synth: &SynthConfig, seed: u64) -> Self {
        let corpus = synth_corpus(synth, seed);
        write_jsonl(&dir.join("raw.jsonl"), &corpus.stories).unwrap();
        write_jsonl(&dir.join("annotations.jsonl"), &corpus.comments).unwrap();
        let negatives: Vec<NegativeStory> = corpus
            .stories
            .iter()
            .filter_map(|s| generate_negative(&s.id, &s.text, NegativeKind::Substitute, seed).ok())
            .collect();
        write_jsonl(&dir.join("negatives.jsonl"), &negatives).unwrap();

        let mut config = AppConfig {
            seed,
            ..Default::default()
        };
        // Generated stories are short; keep them all.
        config.prepare.filter.min_words = 1;
        config.prepare.ratios = SplitRatios {
            train: 0.6,
            val: 0.1,
            test: 0.3,
        };
        let prepared = dir.join("prepared");
        cmd_prepare(&dir.join("raw.jsonl"), &prepared, &config).unwrap();

        let run = storyer::train::RunConfig::desk();
        config.model = run.model;
        config.train = run.train;
        config.model.num_aspects = synth.num_aspects;
        let d = &mut config.data;
        d.stories = Some(prepared.join("stories.jsonl"));
        d.train_pairs = Some(prepared.join("train.jsonl"));
        d.val_pairs = Some(prepared.join("val.jsonl"));
        d.test_pairs = Some(prepared.join("test.jsonl"));
        d.annotations = Some(dir.join("annotations.jsonl"));
        d.negatives = Some(dir.join("negatives.jsonl"));
        Self {
            dir: dir.to_path_buf(),
            corpus,
            config,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Shrinks the model and run so a full train takes a second or two.
    pub fn tiny(mut self, steps: u64) -> Self {
        let m = &mut self.config.model;
        m.d_model = 32;
        m.ffn_dim = 64;
        m.heads = 2;
        m.max_len = 64;
        m.max_comment_len = 16;
        m.window = 8;
        self.config.train.steps = steps;
        self.config.train.batch_size = 8;
        self.config.train.annotation_batch_size = Some(4);
        self.config.train.optimizer.lr = 2e-3;
        self.config.score.decode.max_new_tokens = 8;
        self.config.evaluate.decode.max_new_tokens = 8;
        self
    }
}
