//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Tape`] borrows a [`ParamStore`] for the duration of one forward pass.
//! Each op appends a node holding its output value plus whatever it needs
//! for the backward sweep. [`Tape::backward`] walks the nodes in reverse
//! and returns per-parameter [`Gradients`].

use std::rc::Rc;

use rand::Rng;

use super::attention::{self, AttentionMask};
use super::{Gradients, ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    AddRowBias(Var, Var),
    MatMul(Var, Var),
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    Row {
        x: Var,
        row: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Log {
        x: Var,
        eps: S,
    },
    Sum(Var),
    Mean(Var),
    Dropout {
        x: Var,
        mask: Vec<S>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        mask: Rc<AttentionMask>,
        probs: Vec<S>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<S>,
    },
}

impl<S> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::AddRowBias(..) => "add_row_bias",
            Op::MatMul(..) => "matmul",
            Op::Embed { .. } => "embed",
            Op::Row { .. } => "row",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(_) => "gelu",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::SoftmaxRows(_) => "softmax",
            Op::Log { .. } => "log",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Dropout { .. } => "dropout",
            Op::Attention { .. } => "attention",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

enum Value<S> {
    Owned(Tensor<S>),
    Param(ParamId),
}

struct Node<S> {
    value: Value<S>,
    op: Op<S>,
}

/// Forward-pass recorder.
pub struct Tape<'p, S: Scalar> {
    params: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
    param_vars: Vec<Option<Var>>,
    failure: Option<Error>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            failure: None,
        }
    }

    pub fn params(&self) -> &'p ParamStore<S> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Scalar value of a single-element node, widened to `f64`.
    pub fn item(&self, v: Var) -> f64 {
        self.value(v).item().f64()
    }

    /// First non-finite value seen during the forward pass, if any.
    pub fn failure(&self) -> Option<&Error> {
        self.failure.as_ref()
    }

    /// Fails with the recorded numeric error, if any.
    pub fn check(&self) -> Result<()> {
        match &self.failure {
            Some(e) => Err(clone_numeric(e)),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        if self.failure.is_none() && !value.is_finite() {
            self.failure = Some(Error::Numeric {
                op: format!("{}#{}", op.name(), self.nodes.len()),
                detail: "non-finite value in forward pass".into(),
            });
        }
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Constant)
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op<S>, f: impl Fn(S, S) -> S) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "{} shape mismatch", op.name());
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let t = Tensor::new(x.shape().to_vec(), data).expect("shape");
        self.push(t, op)
    }

    fn map(&mut self, a: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let x = self.value(a);
        let t = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&p| f(p)).collect())
            .expect("shape");
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_map(a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_map(a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_map(a, b, Op::Mul(a, b), |p, q| p * q)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = S::of(c);
        self.map(a, Op::Scale(a, c), |p| p * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let c = S::of(c);
        self.map(a, Op::AddScalar(a), |p| p + c)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    /// Adds a length-`d` bias to every row of an `[n, d]` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let (n, d) = self.value(x).dims2();
        assert_eq!(self.value(bias).len(), d, "bias length");
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for r in 0..n {
            for (o, &bb) in data[r * d..(r + 1) * d].iter_mut().zip(&b) {
                *o += bb;
            }
        }
        self.push(
            Tensor::new(vec![n, d], data).expect("shape"),
            Op::AddRowBias(x, bias),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        self.push(
            Tensor::new(vec![m, n], out).expect("shape"),
            Op::MatMul(a, b),
        )
    }

    /// `x W + b` for `x: [n, in]`, `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Var {
        let y = self.matmul(x, weight);
        match bias {
            Some(b) => self.add_row_bias(y, b),
            None => y,
        }
    }

    /// Gathers rows of a `[V, d]` table.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let (rows, d) = self.value(table).dims2();
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < rows, "embedding id {id} out of range {rows}");
            data.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let t = Tensor::new(vec![ids.len(), d], data).expect("shape");
        self.push(
            t,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Row `row` of an `[n, d]` matrix as a `[1, d]` matrix.
    pub fn row(&mut self, x: Var, row: usize) -> Var {
        let r = self.value(x).row(row).to_vec();
        let d = r.len();
        self.push(
            Tensor::new(vec![1, d], r).expect("shape"),
            Op::Row { x, row },
        )
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (n, d) = self.value(x).dims2();
        let eps = S::of(eps);
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let dn = S::of(d as f64);
        let mut xhat = vec![S::zero(); n * d];
        let mut rstd = vec![S::zero(); n];
        let mut out = vec![S::zero(); n * d];
        for r in 0..n {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<S>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / dn;
            let rs = S::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let t = Tensor::new(vec![n, d], out).expect("shape");
        self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let c = S::of(GELU_C);
        let k = S::of(GELU_A);
        let half = S::of(0.5);
        self.map(a, Op::Gelu(a), |x| {
            half * x * (S::one() + (c * (x + k * x * x * x)).tanh())
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(
            a,
            Op::Relu(a),
            |x| if x > S::zero() { x } else { S::zero() },
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// Softmax over the last axis of a 2-D tensor.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (n, d) = self.value(a).dims2();
        let mut data = self.value(a).data().to_vec();
        for r in 0..n {
            softmax_in_place(&mut data[r * d..(r + 1) * d]);
        }
        self.push(
            Tensor::new(vec![n, d], data).expect("shape"),
            Op::SoftmaxRows(a),
        )
    }

    /// Natural log with inputs clamped below at `eps`; the clamped region
    /// passes no gradient.
    pub fn log_clamped(&mut self, a: Var, eps: f64) -> Var {
        let e = S::of(eps);
        self.map(a, Op::Log { x: a, eps: e }, |x| {
            if x < e {
                e.ln()
            } else {
                x.ln()
            }
        })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = x.data().iter().copied().sum::<S>() / S::of(x.len() as f64);
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Inverted dropout with keep probability `1 - p`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = S::of(1.0 / (1.0 - p));
        let n = self.value(a).len();
        let mask: Vec<S> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < p {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(x.shape().to_vec(), data).expect("shape");
        self.push(t, Op::Dropout { x: a, mask })
    }

    /// Multi-head scaled dot-product attention over an explicit key pattern.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        mask: Rc<AttentionMask>,
    ) -> Var {
        let (lq, d) = self.value(q).dims2();
        let (lk, dk) = self.value(k).dims2();
        assert_eq!(d, dk);
        assert_eq!(self.value(v).dims2(), (lk, d));
        assert_eq!((mask.q_len(), mask.k_len()), (lq, lk), "mask dims");
        assert_eq!(d % heads, 0, "d_model must divide by heads");
        let (out, probs) = attention::forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            d,
            heads,
            &mask,
        );
        let t = Tensor::new(vec![lq, d], out).expect("shape");
        self.push(
            t,
            Op::Attention {
                q,
                k,
                v,
                heads,
                mask,
                probs,
            },
        )
    }

    /// Mean token-level negative log-likelihood of `targets` under
    /// row-wise softmax of `logits: [T, V]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let (t, v) = self.value(logits).dims2();
        assert_eq!(t, targets.len(), "one target per row");
        let mut probs = self.value(logits).data().to_vec();
        let mut nll = S::zero();
        for r in 0..t {
            let row = &mut probs[r * v..(r + 1) * v];
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = row.iter().map(|&x| (x - max).exp()).sum::<S>().ln() + max;
            nll += lse - row[targets[r]];
            for x in row.iter_mut() {
                *x = (*x - lse).exp();
            }
        }
        let loss = nll / S::of(t as f64);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<S>> {
        if let Some(err) = &self.failure {
            return Err(clone_numeric(err));
        }
        let rv = self.value(root);
        if !rv.shape().is_empty() {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![S::one()]);
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric {
                    op: format!("{}#{i}", self.nodes[i].op.name()),
                    detail: "non-finite gradient in backward pass".into(),
                });
            }
            self.backprop_node(i, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop_node(
        &self,
        i: usize,
        g: Vec<S>,
        grads: &mut [Option<Vec<S>>],
        out: &mut Gradients<S>,
    ) {
        let node = &self.nodes[i];
        let y = self.value(Var(i));
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => match &mut out.grads[id.0] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                slot => *slot = Some(g),
            },
            Op::Add(a, b) => {
                self.accum(grads, *a, |d| add_into(d, &g));
                self.accum(grads, *b, |d| add_into(d, &g));
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, |d| add_into(d, &g));
                self.accum(grads, *b, |d| {
                    d.iter_mut().zip(&g).for_each(|(x, &y)| *x -= y)
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accum(grads, *a, |d| {
                    for ((x, &gg), &o) in d.iter_mut().zip(&g).zip(vb) {
                        *x += gg * o;
                    }
                });
                self.accum(grads, *b, |d| {
                    for ((x, &gg), &o) in d.iter_mut().zip(&g).zip(va) {
                        *x += gg * o;
                    }
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accum(grads, *a, |d| {
                    d.iter_mut().zip(&g).for_each(|(x, &y)| *x += y * c)
                });
            }
            Op::AddScalar(a) => self.accum(grads, *a, |d| add_into(d, &g)),
            Op::AddRowBias(x, b) => {
                self.accum(grads, *x, |d| add_into(d, &g));
                let blen = self.value(*b).len();
                self.accum(grads, *b, |d| {
                    for row in g.chunks(blen) {
                        add_into(d, row);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let (_, n) = self.value(*b).dims2();
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                // dA = dC B^T, dB = A^T dC
                self.accum(grads, *a, |d| {
                    S::gemm(m, n, k, &g, false, vb, true, d, true)
                });
                self.accum(grads, *b, |d| {
                    S::gemm(k, m, n, va, true, &g, false, d, true)
                });
            }
            Op::Embed { table, ids } => {
                let (_, d) = self.value(*table).dims2();
                self.accum(grads, *table, |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut dt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::Row { x, row } => {
                let (_, d) = self.value(*x).dims2();
                let row = *row;
                self.accum(grads, *x, |dx| {
                    add_into(&mut dx[row * d..(row + 1) * d], &g)
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (n, d) = self.value(*x).dims2();
                let gv = self.value(*gain).data();
                let dn = S::of(d as f64);
                self.accum(grads, *x, |dx| {
                    let mut dxhat = vec![S::zero(); d];
                    for r in 0..n {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut m1 = S::zero();
                        let mut m2 = S::zero();
                        for c in 0..d {
                            dxhat[c] = gr[c] * gv[c];
                            m1 += dxhat[c];
                            m2 += dxhat[c] * hr[c];
                        }
                        m1 = m1 / dn;
                        m2 = m2 / dn;
                        for c in 0..d {
                            dx[r * d + c] += rstd[r] * (dxhat[c] - m1 - hr[c] * m2);
                        }
                    }
                });
                self.accum(grads, *gain, |dg| {
                    for r in 0..n {
                        for c in 0..d {
                            dg[c] += g[r * d + c] * xhat[r * d + c];
                        }
                    }
                });
                self.accum(grads, *bias, |db| {
                    for row in g.chunks(d) {
                        add_into(db, row);
                    }
                });
            }
            Op::Gelu(a) => {
                let xs = self.value(*a).data();
                let c = S::of(GELU_C);
                let k = S::of(GELU_A);
                let half = S::of(0.5);
                let three_k = S::of(3.0 * GELU_A);
                self.accum(grads, *a, |d| {
                    for ((dx, &gg), &x) in d.iter_mut().zip(&g).zip(xs) {
                        let u = c * (x + k * x * x * x);
                        let t = u.tanh();
                        let du = c * (S::one() + three_k * x * x);
                        let dy = half * (S::one() + t) + half * x * (S::one() - t * t) * du;
                        *dx += gg * dy;
                    }
                });
            }
            Op::Relu(a) => {
                let xs = self.value(*a).data();
                self.accum(grads, *a, |d| {
                    for ((dx, &gg), &x) in d.iter_mut().zip(&g).zip(xs) {
                        if x > S::zero() {
                            *dx += gg;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let ys = y.data();
                self.accum(grads, *a, |d| {
                    for ((dx, &gg), &s) in d.iter_mut().zip(&g).zip(ys) {
                        *dx += gg * s * (S::one() - s);
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let (n, dd) = y.dims2();
                let ys = y.data();
                self.accum(grads, *a, |d| {
                    for r in 0..n {
                        let yr = &ys[r * dd..(r + 1) * dd];
                        let gr = &g[r * dd..(r + 1) * dd];
                        let dot: S = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for c in 0..dd {
                            d[r * dd + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                });
            }
            Op::Log { x, eps } => {
                let xs = self.value(*x).data();
                let e = *eps;
                self.accum(grads, *x, |d| {
                    for ((dx, &gg), &v) in d.iter_mut().zip(&g).zip(xs) {
                        if v >= e {
                            *dx += gg / v;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let gg = g[0];
                self.accum(grads, *a, |d| d.iter_mut().for_each(|x| *x += gg));
            }
            Op::Mean(a) => {
                let n = S::of(self.value(*a).len() as f64);
                let gg = g[0] / n;
                self.accum(grads, *a, |d| d.iter_mut().for_each(|x| *x += gg));
            }
            Op::Dropout { x, mask } => {
                self.accum(grads, *x, |d| {
                    for ((dx, &gg), &m) in d.iter_mut().zip(&g).zip(mask) {
                        *dx += gg * m;
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                mask,
                probs,
            } => {
                let (_, d) = self.value(*q).dims2();
                let mut dq = vec![S::zero(); self.value(*q).len()];
                let mut dk = vec![S::zero(); self.value(*k).len()];
                let mut dv = vec![S::zero(); self.value(*v).len()];
                attention::backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    &g,
                    d,
                    *heads,
                    mask,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                self.accum(grads, *q, |d| add_into(d, &dq));
                self.accum(grads, *k, |d| add_into(d, &dk));
                self.accum(grads, *v, |d| add_into(d, &dv));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (t, v) = self.value(*logits).dims2();
                let scale = g[0] / S::of(t as f64);
                self.accum(grads, *logits, |d| {
                    for r in 0..t {
                        for c in 0..v {
                            let mut p = probs[r * v + c];
                            if c == targets[r] {
                                p -= S::one();
                            }
                            d[r * v + c] += scale * p;
                        }
                    }
                });
            }
        }
    }

    fn accum(&self, grads: &mut [Option<Vec<S>>], v: Var, f: impl FnOnce(&mut [S])) {
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(vec![S::zero(); self.value(v).len()]);
        }
        f(slot.as_mut().expect("initialized"));
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn clone_numeric(err: &Error) -> Error {
    match err {
        Error::Numeric { op, detail } => Error::Numeric {
            op: op.clone(),
            detail: detail.clone(),
        },
        other => Error::contract(other.to_string()),
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub(crate) fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut z = S::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x = *x / z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck;
    use crate::rng;

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row_vector(&[3.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let sq = tape.mul(xv, xv);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row_vector(&[0.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let s = tape.sigmoid(xv);
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.25]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row_vector(&[1.0, 2.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        assert!(matches!(tape.backward(xv), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_parameters_get_no_gradient() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row_vector(&[1.0]));
        let y = store.add("y", Tensor::row_vector(&[1.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let loss = tape.sum(xv);
        let g = tape.backward(loss).unwrap();
        assert!(g.is_reachable(x));
        assert!(!g.is_reachable(y));
        store.get_mut(y).grad = Tensor::row_vector(&[5.0]);
        store.zero_grad();
        store.accumulate(&g);
        assert_eq!(store.get(y).grad.data(), &[0.0]);
    }

    #[test]
    fn nan_names_the_failing_node() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row_vector(&[-1.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let l = tape.log_clamped(xv, 0.0);
        let loss = tape.sum(l);
        match tape.backward(loss) {
            Err(Error::Numeric { op, .. }) => assert!(op.starts_with("log"), "{op}"),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    fn mlp_store(seed: u64) -> ParamStore<f64> {
        let mut rng = rng::stream(seed, "test");
        let mut s = ParamStore::new();
        s.add_normal("x", &[3, 5], 1.0, &mut rng);
        for (i, (a, b)) in [(5, 6), (6, 6), (6, 2)].into_iter().enumerate() {
            s.add_normal(format!("w{i}"), &[a, b], 0.5, &mut rng);
            s.add_normal(format!("b{i}"), &[b], 0.5, &mut rng);
        }
        s
    }

    fn mlp_loss<'p>(store: &'p ParamStore<f64>) -> (Tape<'p, f64>, Var) {
        let mut tape = Tape::new(store);
        let mut h = tape.param(store.id("x").unwrap());
        for i in 0..3 {
            let w = tape.param(store.id(&format!("w{i}")).unwrap());
            let b = tape.param(store.id(&format!("b{i}")).unwrap());
            h = tape.linear(h, w, Some(b));
            if i < 2 {
                h = if i == 0 {
                    tape.gelu(h)
                } else {
                    tape.sigmoid(h)
                };
            }
        }
        let sq = tape.mul(h, h);
        let loss = tape.mean(sq);
        (tape, loss)
    }

    #[test]
    fn mlp_matches_finite_differences() {
        for seed in 0..5 {
            let mut store = mlp_store(seed);
            let report = gradcheck::check(
                &mut store,
                |s| {
                    let (t, l) = mlp_loss(s);
                    Ok(t.item(l))
                },
                |s| {
                    let (t, l) = mlp_loss(s);
                    t.backward(l)
                },
                1e-4,
                usize::MAX,
                &mut rng::stream(seed, "probe"),
            )
            .unwrap();
            assert!(
                report.max_rel_error(1e-6) <= 1e-3,
                "{:?}",
                report.worst(1e-6)
            );
        }
    }

    fn op_store(seed: u64) -> ParamStore<f64> {
        let mut rng = rng::stream(seed, "ops");
        let mut s = ParamStore::new();
        s.add_normal("a", &[4, 6], 1.0, &mut rng);
        s.add_normal("b", &[4, 6], 1.0, &mut rng);
        s.add_normal("w", &[6, 6], 0.5, &mut rng);
        s.add_normal("g", &[6], 1.0, &mut rng);
        s.add_normal("beta", &[6], 1.0, &mut rng);
        s.add_normal("table", &[7, 6], 1.0, &mut rng);
        s
    }

    /// Exercises every primitive except dropout in one scalar objective.
    fn op_loss<'p>(store: &'p ParamStore<f64>) -> (Tape<'p, f64>, Var) {
        let mut tape = Tape::new(store);
        let p = |t: &mut Tape<'p, f64>, n: &str| t.param(store.id(n).unwrap());
        let a = p(&mut tape, "a");
        let b = p(&mut tape, "b");
        let w = p(&mut tape, "w");
        let g = p(&mut tape, "g");
        let beta = p(&mut tape, "beta");
        let table = p(&mut tape, "table");
        let e = tape.embed(table, &[1, 3, 3, 6]);
        let x = tape.add(a, e);
        let x = tape.layer_norm(x, g, beta, 1e-5);
        let y = tape.sub(x, b);
        let y = tape.matmul(y, w);
        let y = tape.add_row_bias(y, beta);
        let y = tape.gelu(y);
        let y = tape.scale(y, 0.7);
        let y = tape.add_scalar(y, 0.1);
        let mask = Rc::new(AttentionMask::sliding_window(
            1,
            &[true, false, false, false],
            &[true; 4],
        ));
        let att = tape.attention(y, x, b, 2, mask);
        let r = tape.relu(att);
        let s = tape.softmax_rows(att);
        let s = tape.one_minus(s);
        let s = tape.log_clamped(s, 1e-12);
        let sig = tape.sigmoid(r);
        let prod = tape.mul(s, sig);
        let row = tape.row(prod, 2);
        let ce = tape.cross_entropy(att, &[0, 5, 2, 1]);
        let m = tape.mean(row);
        let t = tape.sum(prod);
        let t = tape.scale(t, 0.05);
        let l = tape.add(ce, m);
        let l = tape.add(l, t);
        (tape, l)
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        for seed in 0..20 {
            let mut store = op_store(seed);
            let report = gradcheck::check(
                &mut store,
                |s| {
                    let (t, l) = op_loss(s);
                    t.check()?;
                    Ok(t.item(l))
                },
                |s| {
                    let (t, l) = op_loss(s);
                    t.backward(l)
                },
                1e-4,
                usize::MAX,
                &mut rng::stream(seed, "probe"),
            )
            .unwrap();
            let worst = report.worst(1e-6).unwrap();
            assert!(report.max_rel_error(1e-6) <= 1e-3, "seed {seed}: {worst:?}");
        }
    }

    #[test]
    fn dropout_gradient_follows_mask() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::row_vector(&[1.0; 64]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let d = tape.dropout(xv, 0.5, &mut rng::stream(1, "dropout"));
        let out = tape.value(d).data().to_vec();
        let loss = tape.sum(d);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &out[..]);
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
