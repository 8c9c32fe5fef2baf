//! Pre-norm transformer blocks shared by the story model and the comment
//! classifiers.

use std::rc::Rc;

use rand::Rng;

use super::ModelConfig;
use crate::neural::{AttentionMask, ParamId, ParamStore, Scalar, Tape, Var};
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub(crate) struct LayerNorm {
    gain: ParamId,
    bias: ParamId,
}

impl LayerNorm {
    fn register<S: Scalar>(store: &mut ParamStore<S>, prefix: &str, d: usize) -> Self {
        Self {
            gain: store.add_const(format!("{prefix}.gain"), &[d], 1.0),
            bias: store.add_const(format!("{prefix}.bias"), &[d], 0.0),
        }
    }

    fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: Var, eps: f64) -> Var {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, eps)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Linear {
    pub(crate) fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        prefix: &str,
        input: usize,
        output: usize,
        bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_normal(format!("{prefix}.weight"), &[input, output], std, rng);
        let bias = bias.then(|| store.add_const(format!("{prefix}.bias"), &[output], 0.0));
        Self { weight, bias }
    }

    pub(crate) fn weight(&self) -> ParamId {
        self.weight
    }

    pub(crate) fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = self.bias.map(|b| tape.param(b));
        tape.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl Attention {
    fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let d = cfg.d_model;
        let s = cfg.init_std;
        Self {
            q: Linear::register(store, &format!("{prefix}.q"), d, d, true, s, rng),
            k: Linear::register(store, &format!("{prefix}.k"), d, d, true, s, rng),
            v: Linear::register(store, &format!("{prefix}.v"), d, d, true, s, rng),
            out: Linear::register(store, &format!("{prefix}.out"), d, d, true, s, rng),
        }
    }

    fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        query: Var,
        memory: Var,
        heads: usize,
        mask: Rc<AttentionMask>,
    ) -> Var {
        let q = self.q.forward(tape, query);
        let k = self.k.forward(tape, memory);
        let v = self.v.forward(tape, memory);
        let a = tape.attention(q, k, v, heads, mask);
        self.out.forward(tape, a)
    }
}

#[derive(Clone, Debug)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let s = cfg.init_std;
        Self {
            up: Linear::register(
                store,
                &format!("{prefix}.up"),
                cfg.d_model,
                cfg.ffn_dim,
                true,
                s,
                rng,
            ),
            down: Linear::register(
                store,
                &format!("{prefix}.down"),
                cfg.ffn_dim,
                cfg.d_model,
                true,
                s,
                rng,
            ),
        }
    }

    fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Var {
        let h = self.up.forward(tape, x);
        let h = tape.gelu(h);
        self.down.forward(tape, h)
    }
}

/// Optional dropout source for a training forward pass.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: &'r mut SeededRng,
}

fn maybe_dropout<S: Scalar>(tape: &mut Tape<S>, x: Var, dropout: &mut Option<Dropout>) -> Var {
    match dropout {
        Some(d) if d.p > 0.0 => tape.dropout(x, d.p, d.rng),
        _ => x,
    }
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    ln_attn: LayerNorm,
    attn: Attention,
    ln_ffn: LayerNorm,
    ffn: FeedForward,
}

/// Token + position embeddings followed by sliding-window blocks.
#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    pub(crate) token_embed: ParamId,
    position_embed: ParamId,
    blocks: Vec<EncoderBlock>,
    final_ln: LayerNorm,
}

impl Encoder {
    pub(crate) fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let d = cfg.d_model;
        let token_embed = store.add_normal("embed.tokens", &[cfg.vocab_size, d], cfg.init_std, rng);
        let position_embed =
            store.add_normal("encoder.positions", &[cfg.max_len, d], cfg.init_std, rng);
        let blocks = (0..cfg.encoder_layers)
            .map(|i| {
                let p = format!("encoder.layers.{i}");
                EncoderBlock {
                    ln_attn: LayerNorm::register(store, &format!("{p}.ln_attn"), d),
                    attn: Attention::register(store, &format!("{p}.attn"), cfg, rng),
                    ln_ffn: LayerNorm::register(store, &format!("{p}.ln_ffn"), d),
                    ffn: FeedForward::register(store, &format!("{p}.ffn"), cfg, rng),
                }
            })
            .collect();
        let final_ln = LayerNorm::register(store, "encoder.ln_final", d);
        Self {
            token_embed,
            position_embed,
            blocks,
            final_ln,
        }
    }

    /// Runs the encoder under an explicit attention mask; returns `[len, d]`.
    pub(crate) fn forward_masked<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        cfg: &ModelConfig,
        ids: &[usize],
        mask: Rc<AttentionMask>,
        dropout: &mut Option<Dropout>,
    ) -> Var {
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = tape.param(self.token_embed);
        let pos = tape.param(self.position_embed);
        let te = tape.embed(tok, ids);
        let pe = tape.embed(pos, &positions);
        let mut x = tape.add(te, pe);
        x = maybe_dropout(tape, x, dropout);
        let eps = cfg.layer_norm_eps;
        for b in &self.blocks {
            let h = b.ln_attn.forward(tape, x, eps);
            let a = b.attn.forward(tape, h, h, cfg.heads, mask.clone());
            let a = maybe_dropout(tape, a, dropout);
            x = tape.add(x, a);
            let h = b.ln_ffn.forward(tape, x, eps);
            let f = b.ffn.forward(tape, h);
            let f = maybe_dropout(tape, f, dropout);
            x = tape.add(x, f);
        }
        self.final_ln.forward(tape, x, eps)
    }
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    ln_self: LayerNorm,
    self_attn: Attention,
    ln_cross: LayerNorm,
    cross_attn: Attention,
    ln_ffn: LayerNorm,
    ffn: FeedForward,
}

/// Causal decoder with cross-attention to encoder states. Shares the
/// token embedding table with the encoder.
#[derive(Clone, Debug)]
pub(crate) struct Decoder {
    position_embed: ParamId,
    blocks: Vec<DecoderBlock>,
    final_ln: LayerNorm,
    lm_head: ParamId,
}

impl Decoder {
    pub(crate) fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let d = cfg.d_model;
        let position_embed = store.add_normal(
            "decoder.positions",
            &[cfg.max_comment_len, d],
            cfg.init_std,
            rng,
        );
        let blocks = (0..cfg.decoder_layers)
            .map(|i| {
                let p = format!("decoder.layers.{i}");
                DecoderBlock {
                    ln_self: LayerNorm::register(store, &format!("{p}.ln_self"), d),
                    self_attn: Attention::register(store, &format!("{p}.self_attn"), cfg, rng),
                    ln_cross: LayerNorm::register(store, &format!("{p}.ln_cross"), d),
                    cross_attn: Attention::register(store, &format!("{p}.cross_attn"), cfg, rng),
                    ln_ffn: LayerNorm::register(store, &format!("{p}.ln_ffn"), d),
                    ffn: FeedForward::register(store, &format!("{p}.ffn"), cfg, rng),
                }
            })
            .collect();
        let final_ln = LayerNorm::register(store, "decoder.ln_final", d);
        let lm_head = store.add_normal(
            "decoder.lm_head.weight",
            &[d, cfg.vocab_size],
            cfg.init_std,
            rng,
        );
        Self {
            position_embed,
            blocks,
            final_ln,
            lm_head,
        }
    }

    pub(crate) fn lm_head(&self) -> ParamId {
        self.lm_head
    }

    /// Next-token logits `[len(ids), vocab]`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        cfg: &ModelConfig,
        token_embed: ParamId,
        memory: Var,
        memory_valid: &[bool],
        ids: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Var {
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = tape.param(token_embed);
        let pos = tape.param(self.position_embed);
        let te = tape.embed(tok, ids);
        let pe = tape.embed(pos, &positions);
        let mut y = tape.add(te, pe);
        y = maybe_dropout(tape, y, dropout);
        let causal = Rc::new(AttentionMask::causal(ids.len()));
        let cross = Rc::new(AttentionMask::full(ids.len(), memory_valid));
        let eps = cfg.layer_norm_eps;
        for b in &self.blocks {
            let h = b.ln_self.forward(tape, y, eps);
            let a = b.self_attn.forward(tape, h, h, cfg.heads, causal.clone());
            let a = maybe_dropout(tape, a, dropout);
            y = tape.add(y, a);
            let h = b.ln_cross.forward(tape, y, eps);
            let a = b
                .cross_attn
                .forward(tape, h, memory, cfg.heads, cross.clone());
            let a = maybe_dropout(tape, a, dropout);
            y = tape.add(y, a);
            let h = b.ln_ffn.forward(tape, y, eps);
            let f = b.ffn.forward(tape, h);
            let f = maybe_dropout(tape, f, dropout);
            y = tape.add(y, f);
        }
        let y = self.final_ln.forward(tape, y, eps);
        let w = tape.param(self.lm_head);
        tape.matmul(y, w)
    }
}
