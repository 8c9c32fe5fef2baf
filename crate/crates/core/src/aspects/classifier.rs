//! Comment classifiers: the compact encoder with a softmax head over
//! `[CLS]`, used both for aspect categories and for 1-5 sentiment.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::records::{class_from_rating, sentiment_group, CommentRecord};
use crate::error::{Error, Result};
use crate::neural::{AdamWConfig, OptimizerState, ParamStore, Scalar, Tape, Tensor};
use crate::objectives::graph::mean_of;
use crate::rng;
use crate::text::{Dropout, Encoder, Linear, ModelConfig, Vocabulary};

/// Anything that maps comment text to a class distribution.
pub trait CommentScorer {
    fn num_classes(&self) -> usize;
    fn probabilities(&self, text: &str) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Classes with fewer labeled comments are rejected.
    pub min_per_class: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                d_model: 64,
                encoder_layers: 2,
                decoder_layers: 0,
                heads: 4,
                ffn_dim: 128,
                window: 16,
                max_len: 64,
                vocab_size: 4000,
                dropout: 0.1,
                ..Default::default()
            },
            epochs: 20,
            batch_size: 16,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..Default::default()
            },
            min_per_class: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CommentClassifier<S: Scalar = f32> {
    config: ClassifierConfig,
    vocab: Vocabulary,
    params: ParamStore<S>,
    encoder: Encoder,
    head: Linear,
    num_classes: usize,
}

/// Accuracy on the training data after fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub final_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    config: ClassifierConfig,
    num_classes: usize,
    vocab: Vec<String>,
    params: Vec<(String, Tensor<f32>)>,
}

impl<S: Scalar> CommentClassifier<S> {
    /// Untrained classifier over `vocab`.
    pub fn new(
        mut config: ClassifierConfig,
        vocab: Vocabulary,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config("a classifier needs at least two classes"));
        }
        config.model.vocab_size = vocab.len();
        config.model.num_aspects = vocab.num_aspects().max(1);
        config.model.validate()?;
        let mut rng = rng::stream(seed, "init");
        let mut params = ParamStore::new();
        let encoder = Encoder::register(&mut params, &config.model, &mut rng);
        let d = config.model.d_model;
        let head = Linear::register(
            &mut params,
            "head.class",
            d,
            num_classes,
            true,
            config.model.init_std,
            &mut rng,
        );
        Ok(Self {
            config,
            vocab,
            params,
            encoder,
            head,
            num_classes,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn ids(&self, text: &str) -> Result<Vec<usize>> {
        self.vocab.tokenize(text, self.config.model.max_len)
    }

    fn logits(
        &self,
        tape: &mut Tape<S>,
        ids: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> crate::neural::Var {
        let valid = vec![true; ids.len()];
        let global: Vec<bool> = (0..ids.len()).map(|i| i == 0).collect();
        let mask = std::rc::Rc::new(crate::neural::AttentionMask::sliding_window(
            self.config.model.window,
            &global,
            &valid,
        ));
        let states = self
            .encoder
            .forward_masked(tape, &self.config.model, ids, mask, dropout);
        let pooled = tape.row(states, 0);
        self.head.forward(tape, pooled)
    }

    pub fn predict(&self, text: &str) -> Result<usize> {
        let p = self.probabilities(text)?;
        Ok(crate::metrics::top_k(&p, 1)[0])
    }

    /// Trains on `(text, class)` examples.
    pub fn fit(&mut self, examples: &[(String, usize)], seed: u64) -> Result<ClassifierReport> {
        let mut counts = vec![0usize; self.num_classes];
        for (_, c) in examples {
            if *c >= self.num_classes {
                return Err(Error::contract(format!("class {c} out of range")));
            }
            counts[*c] += 1;
        }
        if let Some(c) = counts
            .iter()
            .position(|&n| n < self.config.min_per_class.max(1))
        {
            return Err(Error::contract(format!(
                "class {c} has {} examples, need at least {}",
                counts[c],
                self.config.min_per_class.max(1)
            )));
        }
        let encoded: Vec<(Vec<usize>, usize)> = examples
            .iter()
            .map(|(t, c)| Ok((self.ids(t)?, *c)))
            .collect::<Result<_>>()?;
        let mut opt = OptimizerState::new(self.config.optimizer, &self.params);
        let mut order_rng = rng::stream(seed, "shuffle");
        let mut drop_rng = rng::stream(seed, "dropout");
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let mut final_loss = 0.0;
        for _ in 0..self.config.epochs {
            order.shuffle(&mut order_rng);
            for batch in order.chunks(self.config.batch_size.max(1)) {
                let grads = {
                    let mut tape = Tape::new(&self.params);
                    let mut dropout = Some(Dropout {
                        p: self.config.model.dropout,
                        rng: &mut drop_rng,
                    });
                    let mut terms = Vec::with_capacity(batch.len());
                    for &i in batch {
                        let (ids, c) = &encoded[i];
                        let logits = self.logits(&mut tape, ids, &mut dropout);
                        terms.push(tape.cross_entropy(logits, &[*c]));
                    }
                    let loss = mean_of(&mut tape, &terms).expect("non-empty batch");
                    final_loss = tape.item(loss);
                    tape.backward(loss)?
                };
                self.params.zero_grad();
                self.params.accumulate(&grads);
                opt.step(&mut self.params, self.config.optimizer.lr)?;
            }
        }
        let mut right = vec![0usize; self.num_classes];
        for (text, c) in examples {
            if self.predict(text)? == *c {
                right[*c] += 1;
            }
        }
        Ok(ClassifierReport {
            accuracy: right.iter().sum::<usize>() as f64 / examples.len() as f64,
            per_class_accuracy: right
                .iter()
                .zip(&counts)
                .map(|(&r, &n)| r as f64 / n as f64)
                .collect(),
            final_loss,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ClassifierFile {
            config: self.config.clone(),
            num_classes: self.num_classes,
            vocab: self.vocab.tokens().to_vec(),
            params: self.params.cast::<f32>().named_values(),
        };
        let text = serde_json::to_string(&file)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ClassifierFile = serde_json::from_str(&text)?;
        let vocab = Vocabulary::from_lines(file.vocab.iter().map(String::as_str), 0)?;
        let mut c = Self::new(file.config, vocab, file.num_classes, 0)?;
        let params: Vec<(String, Tensor<S>)> = file
            .params
            .into_iter()
            .map(|(n, t)| (n, t.cast()))
            .collect();
        c.params.load_from(&params)?;
        Ok(c)
    }
}

impl<S: Scalar> CommentScorer for CommentClassifier<S> {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn probabilities(&self, text: &str) -> Result<Vec<f64>> {
        let ids = self.ids(text)?;
        let mut tape = Tape::new(&self.params);
        let logits = self.logits(&mut tape, &ids, &mut None);
        let p = tape.softmax_rows(logits);
        tape.check()?;
        Ok(tape.value(p).to_f64_vec())
    }
}

fn comment_vocab(texts: &[&str], cfg: &ClassifierConfig) -> Result<Vocabulary> {
    Vocabulary::build(texts.iter().copied(), cfg.model.vocab_size, 0)
}

/// Fits a `num_aspects`-way aspect classifier on labeled comments.
pub fn train_aspect_classifier(
    records: &[CommentRecord],
    num_aspects: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(CommentClassifier, ClassifierReport)> {
    let examples: Vec<(String, usize)> = records
        .iter()
        .filter_map(|r| r.aspect.map(|a| (r.text.clone(), a)))
        .collect();
    let texts: Vec<&str> = examples.iter().map(|(t, _)| t.as_str()).collect();
    let mut c =
        CommentClassifier::new(cfg.clone(), comment_vocab(&texts, cfg)?, num_aspects, seed)?;
    let report = c.fit(&examples, seed)?;
    Ok((c, report))
}

/// Fits the 5-way sentiment scorer; classes are ratings 1..=5 stored as
/// indices 0..5.
pub fn train_sentiment_scorer(
    records: &[CommentRecord],
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(CommentClassifier, ClassifierReport)> {
    let examples: Vec<(String, usize)> = records
        .iter()
        .filter_map(|r| {
            r.rating
                .map(|x| (r.text.clone(), usize::from(class_from_rating(x) - 1)))
        })
        .collect();
    let texts: Vec<&str> = examples.iter().map(|(t, _)| t.as_str()).collect();
    let mut c = CommentClassifier::new(cfg.clone(), comment_vocab(&texts, cfg)?, 5, seed)?;
    let report = c.fit(&examples, seed)?;
    Ok((c, report))
}

/// Accuracy after collapsing 1-5 classes into negative/neutral/positive.
pub fn grouped_accuracy(scorer: &dyn CommentScorer, examples: &[(String, u8)]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::contract("no examples"));
    }
    let mut right = 0;
    for (text, class) in examples {
        let p = scorer.probabilities(text)?;
        let predicted = crate::metrics::top_k(&p, 1)[0] as u8 + 1;
        if sentiment_group(predicted) == sentiment_group(*class) {
            right += 1;
        }
    }
    Ok(right as f64 / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspects::CommentSource;

    fn fast_config() -> ClassifierConfig {
        let mut c = ClassifierConfig::default();
        c.model.d_model = 32;
        c.model.ffn_dim = 64;
        c.model.dropout = 0.0;
        c.epochs = 30;
        c.batch_size = 4;
        c.optimizer.lr = 3e-3;
        c
    }

    fn fixture() -> Vec<CommentRecord> {
        let keys = ["opening", "twist", "ending", "character", "scenery"];
        (0..20)
            .map(|i| CommentRecord {
                story_id: format!("s{i}"),
                aspect: Some(i % 5),
                rating: Some((i % 5) as f64 / 4.0),
                text: format!(
                    "the {} was {} here",
                    keys[i % 5],
                    ["nice", "ok", "bad", "fine"][i / 5]
                ),
                source: CommentSource::Crowd,
            })
            .collect()
    }

    #[test]
    fn memorizes_separable_fixture() {
        let (c, report) = train_aspect_classifier(&fixture(), 5, &fast_config(), 1).unwrap();
        assert_eq!(report.accuracy, 1.0, "{report:?}");
        let p = c.probabilities("the twist was nice here").unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        let (s, report) = train_sentiment_scorer(&fixture(), &fast_config(), 1).unwrap();
        assert_eq!(report.accuracy, 1.0);
        let ex: Vec<(String, u8)> = fixture()
            .into_iter()
            .map(|r| (r.text, class_from_rating(r.rating.unwrap())))
            .collect();
        assert_eq!(grouped_accuracy(&s, &ex).unwrap(), 1.0);
    }

    #[test]
    fn empty_class_is_rejected() {
        let recs: Vec<CommentRecord> = fixture()
            .into_iter()
            .filter(|r| r.aspect != Some(2))
            .collect();
        assert!(matches!(
            train_aspect_classifier(&recs, 5, &fast_config(), 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let mut cfg = fast_config();
        cfg.epochs = 1;
        let (c, _) = train_aspect_classifier(&fixture(), 5, &cfg, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        c.save(&p).unwrap();
        let back = CommentClassifier::<f32>::load(&p).unwrap();
        let t = "the ending was bad here";
        assert_eq!(c.probabilities(t).unwrap(), back.probabilities(t).unwrap());
    }
}
