//! Sparse multi-head attention kernels.
//!
//! Every query attends to an explicit sorted list of keys, stored in CSR
//! form. Sliding-window, causal, and full patterns are just different key
//! lists, so one forward/backward pair serves the encoder, the decoder
//! self-attention, and cross-attention.

use super::Scalar;

/// Which keys each query may attend to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    q_len: usize,
    k_len: usize,
    offsets: Vec<usize>,
    keys: Vec<u32>,
}

impl AttentionMask {
    fn from_fn(q_len: usize, k_len: usize, mut allowed: impl FnMut(usize, usize) -> bool) -> Self {
        let mut offsets = Vec::with_capacity(q_len + 1);
        let mut keys = Vec::new();
        offsets.push(0);
        for i in 0..q_len {
            for j in 0..k_len {
                if allowed(i, j) {
                    keys.push(j as u32);
                }
            }
            offsets.push(keys.len());
        }
        Self {
            q_len,
            k_len,
            offsets,
            keys,
        }
    }

    /// Every query sees every valid key.
    pub fn full(q_len: usize, key_valid: &[bool]) -> Self {
        Self::from_fn(q_len, key_valid.len(), |_, j| key_valid[j])
    }

    /// Local attention of the given radius; global positions attend to and
    /// are attended by every valid position. Invalid (padding) keys are
    /// never attended.
    #[allow(clippy::needless_range_loop)]
    pub fn sliding_window(radius: usize, global: &[bool], valid: &[bool]) -> Self {
        assert_eq!(global.len(), valid.len());
        let len = valid.len();
        let mut offsets = Vec::with_capacity(len + 1);
        let mut keys = Vec::new();
        offsets.push(0);
        let global_keys: Vec<usize> = (0..len).filter(|&j| global[j] && valid[j]).collect();
        for i in 0..len {
            if global[i] {
                keys.extend((0..len).filter(|&j| valid[j]).map(|j| j as u32));
            } else {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(len - 1);
                let mut g = global_keys.iter().copied().peekable();
                for j in lo..=hi {
                    while let Some(&gj) = g.peek() {
                        if gj < j {
                            keys.push(gj as u32);
                            g.next();
                        } else {
                            break;
                        }
                    }
                    if g.peek() == Some(&j) {
                        g.next();
                    }
                    if valid[j] {
                        keys.push(j as u32);
                    }
                }
                keys.extend(g.map(|j| j as u32));
            }
            offsets.push(keys.len());
        }
        Self {
            q_len: len,
            k_len: len,
            offsets,
            keys,
        }
    }

    /// Query `i` sees keys `0..=i`.
    pub fn causal(len: usize) -> Self {
        Self::from_fn(len, len, |i, j| j <= i)
    }

    pub fn q_len(&self) -> usize {
        self.q_len
    }

    pub fn k_len(&self) -> usize {
        self.k_len
    }

    pub fn keys(&self, query: usize) -> &[u32] {
        &self.keys[self.offsets[query]..self.offsets[query + 1]]
    }

    pub fn nnz(&self) -> usize {
        self.keys.len()
    }

    fn range(&self, query: usize) -> std::ops::Range<usize> {
        self.offsets[query]..self.offsets[query + 1]
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Forward pass. `q` is `[q_len, d]`, `k` and `v` are `[k_len, d]`.
/// Returns the output `[q_len, d]` and the attention probabilities laid out
/// as `[heads][nnz]`.
pub fn forward<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    d: usize,
    heads: usize,
    mask: &AttentionMask,
) -> (Vec<S>, Vec<S>) {
    let dh = d / heads;
    let scale = S::of(1.0 / (dh as f64).sqrt());
    let nnz = mask.nnz();
    let mut out = vec![S::zero(); mask.q_len * d];
    let mut probs = vec![S::zero(); heads * nnz];
    for h in 0..heads {
        let ho = h * dh;
        let hp = h * nnz;
        for i in 0..mask.q_len {
            let keys = mask.keys(i);
            if keys.is_empty() {
                continue;
            }
            let r = mask.range(i);
            let qi = &q[i * d + ho..i * d + ho + dh];
            let p = &mut probs[hp + r.start..hp + r.end];
            let mut max = S::neg_infinity();
            for (pj, &j) in p.iter_mut().zip(keys) {
                let j = j as usize;
                let s = dot(qi, &k[j * d + ho..j * d + ho + dh]) * scale;
                *pj = s;
                if s > max {
                    max = s;
                }
            }
            let mut z = S::zero();
            for pj in p.iter_mut() {
                *pj = (*pj - max).exp();
                z += *pj;
            }
            let inv = S::one() / z;
            let oi = &mut out[i * d + ho..i * d + ho + dh];
            for (pj, &j) in p.iter_mut().zip(keys) {
                *pj *= inv;
                let j = j as usize;
                let vj = &v[j * d + ho..j * d + ho + dh];
                for (o, &x) in oi.iter_mut().zip(vj) {
                    *o += *pj * x;
                }
            }
        }
    }
    (out, probs)
}

/// Backward pass; accumulates into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub fn backward<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    probs: &[S],
    dout: &[S],
    d: usize,
    heads: usize,
    mask: &AttentionMask,
    dq: &mut [S],
    dk: &mut [S],
    dv: &mut [S],
) {
    let dh = d / heads;
    let scale = S::of(1.0 / (dh as f64).sqrt());
    let nnz = mask.nnz();
    let mut dp = Vec::new();
    for h in 0..heads {
        let ho = h * dh;
        let hp = h * nnz;
        for i in 0..mask.q_len {
            let keys = mask.keys(i);
            if keys.is_empty() {
                continue;
            }
            let r = mask.range(i);
            let p = &probs[hp + r.start..hp + r.end];
            let doi = &dout[i * d + ho..i * d + ho + dh];
            dp.clear();
            let mut weighted = S::zero();
            for (&pj, &j) in p.iter().zip(keys) {
                let j = j as usize;
                let vj = &v[j * d + ho..j * d + ho + dh];
                let g = dot(doi, vj);
                dp.push(g);
                weighted += pj * g;
                let dvj = &mut dv[j * d + ho..j * d + ho + dh];
                for (t, &x) in dvj.iter_mut().zip(doi) {
                    *t += pj * x;
                }
            }
            let qi = &q[i * d + ho..i * d + ho + dh];
            for ((&pj, &g), &j) in p.iter().zip(&dp).zip(keys) {
                let ds = pj * (g - weighted) * scale;
                if ds == S::zero() {
                    continue;
                }
                let j = j as usize;
                let kj = &k[j * d + ho..j * d + ho + dh];
                let dqi = &mut dq[i * d + ho..i * d + ho + dh];
                for (t, &x) in dqi.iter_mut().zip(kj) {
                    *t += ds * x;
                }
                let dkj = &mut dk[j * d + ho..j * d + ho + dh];
                for (t, &x) in dkj.iter_mut().zip(qi) {
                    *t += ds * x;
                }
            }
        }
    }
}
