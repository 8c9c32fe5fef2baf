//! The story evaluator: a sliding-window encoder whose `[CLS]` state feeds
//! three heads (preference, aspect confidence, aspect rating) and a causal
//! decoder that writes aspect-conditioned comments.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::layers::{Decoder, Dropout, Encoder, Linear};
use super::vocab::{BOS_ID, CLS_ID, EOS_ID, FIRST_ASPECT_ID, PAD_ID, SEP_ID};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::neural::{AttentionMask, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use crate::rng;

/// Encoder result on a tape: `[len, d]` token states and the `[1, d]`
/// pooled `[CLS]` feature.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub states: Var,
    pub pooled: Var,
}

/// Encoder result detached from any tape.
#[derive(Clone, Debug)]
pub struct EncoderOutput<S: Scalar> {
    /// Final-layer `[CLS]` state, shape `[d_model]`.
    pub pooled: Tensor<S>,
    /// Shape `[len, d_model]`.
    pub states: Tensor<S>,
}

/// Head outputs for one story.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadOutputs {
    pub p_s: f64,
    pub a_c: Vec<f64>,
    pub a_r: Vec<f64>,
}

/// Teacher-forced comment likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NllStats {
    /// Per-token mean negative log-likelihood.
    pub mean: f64,
    /// Summed negative log-likelihood.
    pub sum: f64,
    /// Number of predicted tokens (`<eos>` included, `<bos>` excluded).
    pub tokens: usize,
}

#[derive(Clone, Debug)]
pub struct StoryModel<S: Scalar = f32> {
    config: ModelConfig,
    params: ParamStore<S>,
    encoder: Encoder,
    decoder: Decoder,
    preference: Linear,
    confidence: Linear,
    rating: Linear,
}

impl<S: Scalar> StoryModel<S> {
    /// Fresh model with weights drawn from the `init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, "init");
        let mut params = ParamStore::new();
        let encoder = Encoder::register(&mut params, &config, &mut rng);
        let std = config.init_std;
        let d = config.d_model;
        let k = config.num_aspects;
        let preference =
            Linear::register(&mut params, "head.preference", d, 1, false, std, &mut rng);
        let confidence =
            Linear::register(&mut params, "head.confidence", d, k, false, std, &mut rng);
        let rating = Linear::register(&mut params, "head.rating", d, k, false, std, &mut rng);
        let decoder = Decoder::register(&mut params, &config, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
            preference,
            confidence,
            rating,
        })
    }

    /// Builds the layout for `config` and loads `values` by name.
    pub fn from_named(config: ModelConfig, values: &[(String, Tensor<S>)]) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.params.load_from(values)?;
        Ok(m)
    }

    /// Same weights in another precision.
    pub fn cast<T: Scalar>(&self) -> StoryModel<T> {
        let values: Vec<(String, Tensor<T>)> = self
            .params
            .named_values()
            .into_iter()
            .map(|(n, t)| (n, t.cast()))
            .collect();
        StoryModel::from_named(self.config.clone(), &values).expect("identical layout")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn preference_weight(&self) -> ParamId {
        self.preference.weight()
    }

    pub fn confidence_weight(&self) -> ParamId {
        self.confidence.weight()
    }

    pub fn rating_weight(&self) -> ParamId {
        self.rating.weight()
    }

    pub fn lm_head(&self) -> ParamId {
        self.decoder.lm_head()
    }

    fn check_input(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() || ids.len() > self.config.max_len {
            return Err(Error::contract(format!(
                "input length {} outside 1..={}",
                ids.len(),
                self.config.max_len
            )));
        }
        if ids[0] != CLS_ID {
            return Err(Error::contract("encoder input must start with [CLS]"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::contract(format!(
                "token id {bad} outside vocabulary"
            )));
        }
        Ok(())
    }

    /// Sliding-window mask with the given global positions; `<pad>` keys
    /// are masked out.
    pub fn encoder_mask(&self, ids: &[usize], global_prefix: usize) -> AttentionMask {
        let valid: Vec<bool> = ids.iter().map(|&i| i != PAD_ID).collect();
        let global: Vec<bool> = (0..ids.len()).map(|i| i < global_prefix).collect();
        AttentionMask::sliding_window(self.config.window, &global, &valid)
    }

    /// Encodes a `[CLS]`-prefixed story; `[CLS]` is the only global token.
    pub fn forward_encoder(
        &self,
        tape: &mut Tape<S>,
        ids: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Result<Encoded> {
        self.check_input(ids)?;
        let mask = Rc::new(self.encoder_mask(ids, 1));
        Ok(self.encode_with_mask(tape, ids, mask, dropout))
    }

    /// Encodes under a caller-supplied mask.
    pub fn encode_with_mask(
        &self,
        tape: &mut Tape<S>,
        ids: &[usize],
        mask: Rc<AttentionMask>,
        dropout: &mut Option<Dropout>,
    ) -> Encoded {
        let states = self
            .encoder
            .forward_masked(tape, &self.config, ids, mask, dropout);
        let pooled = tape.row(states, 0);
        Encoded { states, pooled }
    }

    /// `sigmoid(v_s W_ps)` as a `[1, 1]` node.
    pub fn forward_preference(&self, tape: &mut Tape<S>, pooled: Var) -> Var {
        let logit = self.preference.forward(tape, pooled);
        tape.sigmoid(logit)
    }

    /// `(softmax(v_s W_ac), sigmoid(v_s W_ar))`, each `[1, K]`.
    pub fn forward_aspects(&self, tape: &mut Tape<S>, pooled: Var) -> (Var, Var) {
        let c = self.confidence.forward(tape, pooled);
        let c = tape.softmax_rows(c);
        let r = self.rating.forward(tape, pooled);
        let r = tape.sigmoid(r);
        (c, r)
    }

    /// Comment-path encoder input: `[CLS] <aspect_k> <sep>` followed by the
    /// story words, truncated to `max_len`. Returns the ids and the number of
    /// leading global positions.
    pub fn comment_input(&self, story_ids: &[usize], aspect: usize) -> Result<(Vec<usize>, usize)> {
        if aspect >= self.config.num_aspects {
            return Err(Error::contract(format!(
                "aspect {aspect} out of range 0..{}",
                self.config.num_aspects
            )));
        }
        let body = match story_ids.first() {
            Some(&CLS_ID) => &story_ids[1..],
            _ => story_ids,
        };
        let mut ids = vec![CLS_ID, FIRST_ASPECT_ID + aspect, SEP_ID];
        ids.extend(body.iter().copied().take(self.config.max_len - 3));
        Ok((ids, 3))
    }

    /// Encodes the aspect-prefixed story; returns memory states and their
    /// validity mask for cross-attention.
    pub fn forward_comment_memory(
        &self,
        tape: &mut Tape<S>,
        story_ids: &[usize],
        aspect: usize,
        dropout: &mut Option<Dropout>,
    ) -> Result<(Var, Vec<bool>)> {
        let (ids, globals) = self.comment_input(story_ids, aspect)?;
        self.check_input(&ids)?;
        let mask = Rc::new(self.encoder_mask(&ids, globals));
        let enc = self.encode_with_mask(tape, &ids, mask, dropout);
        let valid = ids.iter().map(|&i| i != PAD_ID).collect();
        Ok((enc.states, valid))
    }

    /// Next-token logits for decoder input `ids`.
    pub fn forward_decoder(
        &self,
        tape: &mut Tape<S>,
        memory: Var,
        memory_valid: &[bool],
        ids: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        if ids.is_empty() || ids.len() > self.config.max_comment_len {
            return Err(Error::contract(format!(
                "decoder length {} outside 1..={}",
                ids.len(),
                self.config.max_comment_len
            )));
        }
        Ok(self.decoder.forward(
            tape,
            &self.config,
            self.encoder.token_embed,
            memory,
            memory_valid,
            ids,
            dropout,
        ))
    }

    /// Per-token mean NLL of `comment_ids` (`<bos> ... <eos>`) as a scalar node.
    pub fn forward_comment_nll(
        &self,
        tape: &mut Tape<S>,
        story_ids: &[usize],
        aspect: usize,
        comment_ids: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        check_comment(comment_ids)?;
        let (memory, valid) = self.forward_comment_memory(tape, story_ids, aspect, dropout)?;
        let n = comment_ids.len();
        let logits = self.forward_decoder(tape, memory, &valid, &comment_ids[..n - 1], dropout)?;
        Ok(tape.cross_entropy(logits, &comment_ids[1..]))
    }

    /// Detached encoder run (no dropout).
    pub fn encode(&self, ids: &[usize]) -> Result<EncoderOutput<S>> {
        let mut tape = Tape::new(&self.params);
        let enc = self.forward_encoder(&mut tape, ids, &mut None)?;
        tape.check()?;
        let d = self.config.d_model;
        Ok(EncoderOutput {
            pooled: tape.value(enc.pooled).clone().reshape(&[d])?,
            states: tape.value(enc.states).clone(),
        })
    }

    pub fn predict_preference(&self, pooled: &Tensor<S>) -> f64 {
        let mut tape = Tape::new(&self.params);
        let v = tape.constant(pooled.clone().reshape(&[1, pooled.len()]).expect("vector"));
        let p = self.forward_preference(&mut tape, v);
        tape.item(p)
    }

    pub fn predict_aspects(&self, pooled: &Tensor<S>) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new(&self.params);
        let v = tape.constant(pooled.clone().reshape(&[1, pooled.len()]).expect("vector"));
        let (c, r) = self.forward_aspects(&mut tape, v);
        (tape.value(c).to_f64_vec(), tape.value(r).to_f64_vec())
    }

    /// All three head outputs for one `[CLS]`-prefixed story.
    pub fn score(&self, ids: &[usize]) -> Result<HeadOutputs> {
        let mut tape = Tape::new(&self.params);
        let enc = self.forward_encoder(&mut tape, ids, &mut None)?;
        let p = self.forward_preference(&mut tape, enc.pooled);
        let (c, r) = self.forward_aspects(&mut tape, enc.pooled);
        tape.check()?;
        Ok(HeadOutputs {
            p_s: tape.item(p),
            a_c: tape.value(c).to_f64_vec(),
            a_r: tape.value(r).to_f64_vec(),
        })
    }

    /// Teacher-forced likelihood of a `<bos> ... <eos>` comment.
    pub fn teacher_forced_nll(
        &self,
        story_ids: &[usize],
        aspect: usize,
        comment_ids: &[usize],
    ) -> Result<NllStats> {
        let mut tape = Tape::new(&self.params);
        let nll = self.forward_comment_nll(&mut tape, story_ids, aspect, comment_ids, &mut None)?;
        let mean = tape.item(nll);
        let tokens = comment_ids.len() - 1;
        Ok(NllStats {
            mean,
            sum: mean * tokens as f64,
            tokens,
        })
    }
}

pub(crate) fn check_comment(ids: &[usize]) -> Result<()> {
    if ids.first() != Some(&BOS_ID) || ids.last() != Some(&EOS_ID) {
        return Err(Error::contract(
            "comment must start with <bos> and end with <eos>",
        ));
    }
    if ids.len() < 3 {
        return Err(Error::contract("comment is empty"));
    }
    Ok(())
}
