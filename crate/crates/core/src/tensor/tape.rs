//! The gradient tape: eager forward ops, one reverse pass for gradients.
//!
//! Every forward call appends a node holding the op, its operand indices,
//! and the computed output value. [`Tape::backward`] seeds the scalar loss
//! with gradient 1 and walks nodes in reverse creation order; because a node
//! can only consume earlier nodes, each node's gradient is complete by the
//! time its own backward rule runs. Fan-out (one value consumed by several
//! ops) is handled by plain accumulation into the operand's gradient buffer.
//!
//! Matrix products route through the tuned [`Scalar::gemm`] kernel, with
//! transposed operands expressed as stride views so backward never copies a
//! matrix just to transpose it.

use std::cell::RefCell;
use std::sync::Arc;

use super::{Scalar, Tensor, TensorError, IGNORE_TOKEN};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node<S: Scalar> {
    value: Tensor<S>,
    op: Op<S>,
    name: &'static str,
}

enum Op<S: Scalar> {
    Leaf,
    Add(usize, usize),
    AddBias { a: usize, bias: usize },
    Mul(usize, usize),
    Scale { a: usize, c: S },
    MatMul { a: usize, b: usize, trans_b: bool },
    Bmm { a: usize, b: usize, trans_b: bool },
    LayerNorm { a: usize, gain: usize, bias: usize, eps: f64 },
    Gelu { a: usize },
    CausalSoftmax { a: usize },
    Rotary { a: usize, rotary_dim: usize, pos_offset: usize, base: f64 },
    Embedding { table: usize, ids: Arc<Vec<u32>> },
    CrossEntropyMean { logits: usize, targets: Arc<Vec<u32>> },
    Reshape { a: usize },
    SwapAxes12 { a: usize },
    ConcatAxis2 { a: usize, b: usize },
    Narrow { a: usize, axis: usize, start: usize },
}

/// Gradients of one backward pass, indexed by the Var they belong to. Only
/// leaf nodes keep their gradients; intermediate buffers are dropped as soon
/// as their backward rule has run.
#[derive(Debug)]
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss with respect to `var`. `None` when `var` is not
    /// a leaf or the loss never depended on it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor<S>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

/// The recording tape. Create one per forward pass; ops borrow it
/// immutably, so model code can thread a single `&Tape` everywhere.
pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<Node<S>>>,
    poison: RefCell<Option<TensorError>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            poison: RefCell::new(None),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Error if any op so far produced a non-finite value.
    pub fn health(&self) -> Result<(), TensorError> {
        match &*self.poison.borrow() {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    /// Current value of a node (cheap: buffers are shared).
    pub fn value(&self, v: Var) -> Tensor<S> {
        self.nodes.borrow()[v.0].value.clone()
    }

    fn val(&self, v: Var) -> Tensor<S> {
        self.nodes.borrow()[v.0].value.clone()
    }

    fn push(&self, name: &'static str, value: Tensor<S>, op: Op<S>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        if self.poison.borrow().is_none() {
            if let Some(index) = value.first_non_finite() {
                *self.poison.borrow_mut() = Some(TensorError::NonFinite {
                    op: name,
                    node: idx,
                    index,
                });
            }
        }
        nodes.push(Node { value, op, name });
        Var(idx)
    }

    // ------------------------------------------------------------------
    // Forward ops
    // ------------------------------------------------------------------

    /// Record an input tensor (parameter, activation, or constant).
    pub fn leaf(&self, value: Tensor<S>) -> Var {
        self.push("leaf", value, Op::Leaf)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.push("add", Tensor::new(va.shape().to_vec(), data), Op::Add(a.0, b.0))
    }

    /// `a + bias` with `bias` broadcast over every leading dimension;
    /// `bias.len()` must equal the last dimension of `a`.
    pub fn add_bias(&self, a: Var, bias: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(bias));
        let n = *va.shape().last().expect("add_bias: scalar input");
        assert_eq!(vb.shape(), &[n], "add_bias: bias must be [last_dim]");
        let mut data = Vec::with_capacity(va.len());
        for row in va.data().chunks_exact(n) {
            data.extend(row.iter().zip(vb.data()).map(|(&x, &y)| x + y));
        }
        self.push(
            "add_bias",
            Tensor::new(va.shape().to_vec(), data),
            Op::AddBias { a: a.0, bias: bias.0 },
        )
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        assert_eq!(va.shape(), vb.shape(), "mul: shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.push("mul", Tensor::new(va.shape().to_vec(), data), Op::Mul(a.0, b.0))
    }

    /// Multiply by a compile-time-known constant.
    pub fn scale(&self, a: Var, c: f64) -> Var {
        let va = self.val(a);
        let cs = S::from_f64(c);
        let data = va.data().iter().map(|&x| x * cs).collect();
        self.push(
            "scale",
            Tensor::new(va.shape().to_vec(), data),
            Op::Scale { a: a.0, c: cs },
        )
    }

    /// 2-D matrix product `[m,k] · [k,n] → [m,n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        self.matmul_impl(a, b, false)
    }

    /// 2-D matrix product against a transposed right operand:
    /// `[m,k] · [n,k]ᵀ → [m,n]`. This is the natural layout for linear
    /// layers whose weights are stored `[out, in]`.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&self, a: Var, b: Var, trans_b: bool) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        assert_eq!(va.shape().len(), 2, "matmul: left operand must be 2-D");
        assert_eq!(vb.shape().len(), 2, "matmul: right operand must be 2-D");
        let (m, k) = (va.shape()[0], va.shape()[1]);
        let (n, kb) = if trans_b {
            (vb.shape()[0], vb.shape()[1])
        } else {
            (vb.shape()[1], vb.shape()[0])
        };
        assert_eq!(k, kb, "matmul: inner dimensions differ ({k} vs {kb})");
        let mut out = vec![S::ZERO; m * n];
        unsafe {
            let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
            S::gemm(
                m, k, n, S::ONE,
                va.data().as_ptr(), k as isize, 1,
                vb.data().as_ptr(), rsb, csb,
                S::ZERO, out.as_mut_ptr(), n as isize, 1,
            );
        }
        self.push(
            if trans_b { "matmul_nt" } else { "matmul" },
            Tensor::new(vec![m, n], out),
            Op::MatMul { a: a.0, b: b.0, trans_b },
        )
    }

    /// Grouped matrix product `[g,m,k] · [g,k,n] → [g,m,n]` (one gemm per
    /// group; attention uses a group per batch×head).
    pub fn bmm(&self, a: Var, b: Var) -> Var {
        self.bmm_impl(a, b, false)
    }

    /// Grouped product with transposed right operand:
    /// `[g,m,k] · [g,n,k]ᵀ → [g,m,n]` (query·keyᵀ without copying keys).
    pub fn bmm_nt(&self, a: Var, b: Var) -> Var {
        self.bmm_impl(a, b, true)
    }

    fn bmm_impl(&self, a: Var, b: Var, trans_b: bool) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        assert_eq!(va.shape().len(), 3, "bmm: left operand must be 3-D");
        assert_eq!(vb.shape().len(), 3, "bmm: right operand must be 3-D");
        let (g, m, k) = (va.shape()[0], va.shape()[1], va.shape()[2]);
        assert_eq!(vb.shape()[0], g, "bmm: group counts differ");
        let (n, kb) = if trans_b {
            (vb.shape()[1], vb.shape()[2])
        } else {
            (vb.shape()[2], vb.shape()[1])
        };
        assert_eq!(k, kb, "bmm: inner dimensions differ ({k} vs {kb})");
        let mut out = vec![S::ZERO; g * m * n];
        let b_stride = k * n; // per-group element count, transposed or not
        unsafe {
            let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
            for gi in 0..g {
                S::gemm(
                    m, k, n, S::ONE,
                    va.data().as_ptr().add(gi * m * k), k as isize, 1,
                    vb.data().as_ptr().add(gi * b_stride), rsb, csb,
                    S::ZERO, out.as_mut_ptr().add(gi * m * n), n as isize, 1,
                );
            }
        }
        self.push(
            if trans_b { "bmm_nt" } else { "bmm" },
            Tensor::new(vec![g, m, n], out),
            Op::Bmm { a: a.0, b: b.0, trans_b },
        )
    }

    /// Layer normalization over the last dimension: per row,
    /// `y = (x − μ)/√(σ² + eps) · gain + bias`.
    pub fn layer_norm(&self, a: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (va, vg, vb) = (self.val(a), self.val(gain), self.val(bias));
        let d = *va.shape().last().expect("layer_norm: scalar input");
        assert_eq!(vg.shape(), &[d], "layer_norm: gain must be [last_dim]");
        assert_eq!(vb.shape(), &[d], "layer_norm: bias must be [last_dim]");
        let mut data = Vec::with_capacity(va.len());
        for row in va.data().chunks_exact(d) {
            let (mean, inv) = row_stats(row, eps);
            for (i, &x) in row.iter().enumerate() {
                let xn = (x - mean) * inv;
                data.push(xn * vg.data()[i] + vb.data()[i]);
            }
        }
        self.push(
            "layer_norm",
            Tensor::new(va.shape().to_vec(), data),
            Op::LayerNorm { a: a.0, gain: gain.0, bias: bias.0, eps },
        )
    }

    /// GELU activation, tanh form:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&self, a: Var) -> Var {
        let va = self.val(a);
        let data = va.data().iter().map(|&x| gelu_forward(x)).collect();
        self.push(
            "gelu",
            Tensor::new(va.shape().to_vec(), data),
            Op::Gelu { a: a.0 },
        )
    }

    /// Masked softmax over the last axis of `[b, h, t, s]` attention scores.
    /// Query `t` may attend to keys `s ≤ t + (s_len − t_len)`; masked
    /// positions come out exactly zero. With `s_len == t_len` this is the
    /// standard causal mask; with `s_len > t_len` the extra left context is
    /// fully visible (incremental decoding against a key/value cache).
    pub fn causal_softmax(&self, scores: Var) -> Var {
        let v = self.val(scores);
        assert_eq!(v.shape().len(), 4, "causal_softmax: scores must be [b,h,t,s]");
        let (t_len, s_len) = (v.shape()[2], v.shape()[3]);
        assert!(
            s_len >= t_len,
            "causal_softmax: key axis ({s_len}) shorter than query axis ({t_len})"
        );
        let offset = s_len - t_len;
        let mut data = vec![S::ZERO; v.len()];
        for (r, row) in v.data().chunks_exact(s_len).enumerate() {
            let t = r % t_len;
            let visible = t + offset + 1;
            let out = &mut data[r * s_len..r * s_len + visible];
            let mut max = row[0];
            for &x in &row[1..visible] {
                max = max.maximum(x);
            }
            let mut sum = 0.0f64;
            for (o, &x) in out.iter_mut().zip(&row[..visible]) {
                let e = (x - max).exp();
                sum += e.to_f64();
                *o = e;
            }
            let inv = S::from_f64(1.0 / sum);
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        self.push(
            "causal_softmax",
            Tensor::new(v.shape().to_vec(), data),
            Op::CausalSoftmax { a: scores.0 },
        )
    }

    /// Rotary position mixing on `[b, h, t, hd]`: the first `rotary_dim`
    /// channels are rotated pairwise by angle `(t + pos_offset) ·
    /// base^(−2i/rotary_dim)`; the rest pass through. `pos_offset` positions
    /// the block inside a longer sequence during incremental decoding.
    pub fn rotary(&self, a: Var, rotary_dim: usize, pos_offset: usize, base: f64) -> Var {
        let va = self.val(a);
        assert_eq!(va.shape().len(), 4, "rotary: input must be [b,h,t,hd]");
        let (t_len, hd) = (va.shape()[2], va.shape()[3]);
        assert!(rotary_dim <= hd, "rotary: rotary_dim {rotary_dim} exceeds head dim {hd}");
        assert_eq!(rotary_dim % 2, 0, "rotary: rotary_dim must be even");
        let table = rotary_table(t_len, pos_offset, rotary_dim, base);
        let mut data = va.data().to_vec();
        apply_rotary::<S, false>(&mut data, va.shape(), rotary_dim, &table);
        self.push(
            "rotary",
            Tensor::new(va.shape().to_vec(), data),
            Op::Rotary { a: a.0, rotary_dim, pos_offset, base },
        )
    }

    /// Row lookup: `table[v, d]` gathered by `ids` → `[ids_shape..., d]`.
    pub fn embedding(&self, table: Var, ids: &[u32], ids_shape: &[usize]) -> Var {
        let vt = self.val(table);
        assert_eq!(vt.shape().len(), 2, "embedding: table must be [vocab, dim]");
        let (v, d) = (vt.shape()[0], vt.shape()[1]);
        assert_eq!(
            ids.len(),
            ids_shape.iter().product::<usize>(),
            "embedding: ids length does not match ids_shape"
        );
        let mut data = Vec::with_capacity(ids.len() * d);
        for (pos, &id) in ids.iter().enumerate() {
            assert!(
                (id as usize) < v,
                "embedding: id {id} at position {pos} out of range for vocab {v}"
            );
            let row = &vt.data()[id as usize * d..(id as usize + 1) * d];
            data.extend_from_slice(row);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(d);
        self.push(
            "embedding",
            Tensor::new(shape, data),
            Op::Embedding { table: table.0, ids: Arc::new(ids.to_vec()) },
        )
    }

    /// Mean token cross-entropy: `logits` is `[..., v]`, `targets` has one
    /// id per logit row, and rows whose target is [`IGNORE_TOKEN`] are
    /// skipped. Returns a scalar. At least one row must be counted.
    pub fn cross_entropy_mean(&self, logits: Var, targets: &[u32]) -> Var {
        let v = self.val(logits);
        let vocab = *v.shape().last().expect("cross_entropy: scalar input");
        let rows = v.len() / vocab;
        assert_eq!(targets.len(), rows, "cross_entropy: one target per row");
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for (row, &target) in v.data().chunks_exact(vocab).zip(targets) {
            if target == IGNORE_TOKEN {
                continue;
            }
            assert!(
                (target as usize) < vocab,
                "cross_entropy: target {target} out of range for vocab {vocab}"
            );
            sum += row_neg_log_prob(row, target as usize);
            count += 1;
        }
        assert!(count > 0, "cross_entropy: every row was ignored");
        let loss = S::from_f64(sum / count as f64);
        self.push(
            "cross_entropy_mean",
            Tensor::scalar(loss),
            Op::CrossEntropyMean { logits: logits.0, targets: Arc::new(targets.to_vec()) },
        )
    }

    /// Same data under a new shape (element count preserved).
    pub fn reshape(&self, a: Var, shape: &[usize]) -> Var {
        let va = self.val(a);
        self.push(
            "reshape",
            va.reshaped(shape.to_vec()),
            Op::Reshape { a: a.0 },
        )
    }

    /// Transpose axes 1 and 2 of a 4-D tensor:
    /// `[b, x, y, d] → [b, y, x, d]` (head split/join).
    pub fn swap_axes_1_2(&self, a: Var) -> Var {
        let va = self.val(a);
        assert_eq!(va.shape().len(), 4, "swap_axes_1_2: input must be 4-D");
        let shape = va.shape().to_vec();
        let out_shape = vec![shape[0], shape[2], shape[1], shape[3]];
        let data = swap_axes_copy(va.data(), &shape);
        self.push(
            "swap_axes_1_2",
            Tensor::new(out_shape, data),
            Op::SwapAxes12 { a: a.0 },
        )
    }

    /// Contiguous slice `[start, start+len)` along one axis; the fused
    /// query/key/value projection is split back apart with this.
    pub fn narrow(&self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let va = self.val(a);
        let shape = va.shape();
        assert!(axis < shape.len(), "narrow: axis {axis} out of range");
        assert!(
            start + len <= shape[axis],
            "narrow: [{start}, {}) exceeds axis length {}",
            start + len,
            shape[axis]
        );
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * mid + start) * inner;
            data.extend_from_slice(&va.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        self.push(
            "narrow",
            Tensor::new(out_shape, data),
            Op::Narrow { a: a.0, axis, start },
        )
    }

    /// Concatenate two 4-D tensors along axis 2 (the time axis of
    /// `[b, h, t, d]`); used to extend a key/value cache.
    pub fn concat_axis2(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        assert_eq!(va.shape().len(), 4, "concat_axis2: inputs must be 4-D");
        assert_eq!(vb.shape().len(), 4, "concat_axis2: inputs must be 4-D");
        let (sa, sb) = (va.shape(), vb.shape());
        assert!(
            sa[0] == sb[0] && sa[1] == sb[1] && sa[3] == sb[3],
            "concat_axis2: shapes {sa:?} and {sb:?} differ outside axis 2"
        );
        let (groups, d) = (sa[0] * sa[1], sa[3]);
        let (ta, tb) = (sa[2], sb[2]);
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for gi in 0..groups {
            data.extend_from_slice(&va.data()[gi * ta * d..(gi + 1) * ta * d]);
            data.extend_from_slice(&vb.data()[gi * tb * d..(gi + 1) * tb * d]);
        }
        let out_shape = vec![sa[0], sa[1], ta + tb, d];
        self.push(
            "concat_axis2",
            Tensor::new(out_shape, data),
            Op::ConcatAxis2 { a: a.0, b: b.0 },
        )
    }

    // ------------------------------------------------------------------
    // Backward
    // ------------------------------------------------------------------

    /// Reverse pass from a scalar loss. Consumes nothing; the tape can keep
    /// recording afterwards (the trainer never needs to, but generation
    /// reuses tapes). Errors if the forward pass was poisoned, the loss is
    /// not a scalar, or any gradient turns non-finite.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, TensorError> {
        self.health()?;
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.0].value.shape();
        if nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![S::ONE]);

        for i in (0..=loss.0).rev() {
            let Some(grad) = grads[i].take() else { continue };
            let node = &nodes[i];
            if let Some(index) = grad.iter().position(|x| !x.is_finite()) {
                return Err(TensorError::NonFinite { op: node.name, node: i, index });
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(grad);
                    continue;
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &nodes, |ga| add_into(ga, &grad));
                    acc(&mut grads, *b, &nodes, |gb| add_into(gb, &grad));
                }
                Op::AddBias { a, bias } => {
                    acc(&mut grads, *a, &nodes, |ga| add_into(ga, &grad));
                    let n = nodes[*bias].value.len();
                    acc(&mut grads, *bias, &nodes, |gb| {
                        for row in grad.chunks_exact(n) {
                            add_into(gb, row);
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[*a].value.clone(), nodes[*b].value.clone());
                    acc(&mut grads, *a, &nodes, |ga| {
                        for ((g, &y), o) in grad.iter().zip(vb.data()).zip(ga) {
                            *o += *g * y;
                        }
                    });
                    acc(&mut grads, *b, &nodes, |gb| {
                        for ((g, &x), o) in grad.iter().zip(va.data()).zip(gb) {
                            *o += *g * x;
                        }
                    });
                }
                Op::Scale { a, c } => {
                    let c = *c;
                    acc(&mut grads, *a, &nodes, |ga| {
                        for (g, o) in grad.iter().zip(ga) {
                            *o += *g * c;
                        }
                    });
                }
                Op::MatMul { a, b, trans_b } => {
                    backward_matmul(&mut grads, &nodes, &grad, *a, *b, *trans_b, 1);
                }
                Op::Bmm { a, b, trans_b } => {
                    let g = nodes[*a].value.shape()[0];
                    backward_matmul(&mut grads, &nodes, &grad, *a, *b, *trans_b, g);
                }
                Op::LayerNorm { a, gain, bias, eps } => {
                    backward_layer_norm(&mut grads, &nodes, &grad, *a, *gain, *bias, *eps);
                }
                Op::Gelu { a } => {
                    let va = nodes[*a].value.clone();
                    acc(&mut grads, *a, &nodes, |ga| {
                        for ((g, &x), o) in grad.iter().zip(va.data()).zip(ga) {
                            *o += *g * gelu_derivative(x);
                        }
                    });
                }
                Op::CausalSoftmax { a } => {
                    let probs = node.value.clone();
                    let s_len = *probs.shape().last().unwrap();
                    acc(&mut grads, *a, &nodes, |ga| {
                        for (r, (p_row, g_row)) in probs
                            .data()
                            .chunks_exact(s_len)
                            .zip(grad.chunks_exact(s_len))
                            .enumerate()
                        {
                            let mut dot = 0.0f64;
                            for (&p, &g) in p_row.iter().zip(g_row) {
                                dot += (p * g).to_f64();
                            }
                            let dot = S::from_f64(dot);
                            let out = &mut ga[r * s_len..(r + 1) * s_len];
                            for ((o, &p), &g) in out.iter_mut().zip(p_row).zip(g_row) {
                                *o += p * (g - dot);
                            }
                        }
                    });
                }
                Op::Rotary { a, rotary_dim, pos_offset, base } => {
                    let shape = nodes[*a].value.shape().to_vec();
                    let table = rotary_table(shape[2], *pos_offset, *rotary_dim, *base);
                    let mut g = grad.clone();
                    apply_rotary::<S, true>(&mut g, &shape, *rotary_dim, &table);
                    acc(&mut grads, *a, &nodes, |ga| add_into(ga, &g));
                }
                Op::Embedding { table, ids } => {
                    let d = nodes[*table].value.shape()[1];
                    acc(&mut grads, *table, &nodes, |gt| {
                        for (row, &id) in grad.chunks_exact(d).zip(ids.iter()) {
                            let out = &mut gt[id as usize * d..(id as usize + 1) * d];
                            add_into(out, row);
                        }
                    });
                }
                Op::CrossEntropyMean { logits, targets } => {
                    backward_cross_entropy(&mut grads, &nodes, grad[0], *logits, targets);
                }
                Op::Reshape { a } => {
                    acc(&mut grads, *a, &nodes, |ga| add_into(ga, &grad));
                }
                Op::SwapAxes12 { a } => {
                    let out_shape = node.value.shape().to_vec();
                    let g = swap_axes_copy(&grad, &out_shape);
                    acc(&mut grads, *a, &nodes, |ga| add_into(ga, &g));
                }
                Op::Narrow { a, axis, start } => {
                    let in_shape = nodes[*a].value.shape().to_vec();
                    let out_shape = node.value.shape().to_vec();
                    let outer: usize = in_shape[..*axis].iter().product();
                    let mid = in_shape[*axis];
                    let inner: usize = in_shape[*axis + 1..].iter().product();
                    let len = out_shape[*axis];
                    acc(&mut grads, *a, &nodes, |ga| {
                        for o in 0..outer {
                            let base = (o * mid + start) * inner;
                            add_into(
                                &mut ga[base..base + len * inner],
                                &grad[o * len * inner..(o + 1) * len * inner],
                            );
                        }
                    });
                }
                Op::ConcatAxis2 { a, b } => {
                    let (sa, sb) = (
                        nodes[*a].value.shape().to_vec(),
                        nodes[*b].value.shape().to_vec(),
                    );
                    let (groups, d) = (sa[0] * sa[1], sa[3]);
                    let (ta, tb) = (sa[2], sb[2]);
                    let row = (ta + tb) * d;
                    acc(&mut grads, *a, &nodes, |ga| {
                        for gi in 0..groups {
                            add_into(
                                &mut ga[gi * ta * d..(gi + 1) * ta * d],
                                &grad[gi * row..gi * row + ta * d],
                            );
                        }
                    });
                    acc(&mut grads, *b, &nodes, |gb| {
                        for gi in 0..groups {
                            add_into(
                                &mut gb[gi * tb * d..(gi + 1) * tb * d],
                                &grad[gi * row + ta * d..(gi + 1) * row],
                            );
                        }
                    });
                }
            }
        }

        // Package leaf gradients; everything else was dropped on the walk.
        let mut out: Vec<Option<Tensor<S>>> = vec![None; nodes.len()];
        for (i, slot) in grads.into_iter().enumerate() {
            let Some(g) = slot else { continue };
            if let Some(index) = g.iter().position(|x| !x.is_finite()) {
                return Err(TensorError::NonFinite { op: nodes[i].name, node: i, index });
            }
            out[i] = Some(Tensor::new(nodes[i].value.shape().to_vec(), g));
        }
        Ok(Gradients { grads: out })
    }
}

// ----------------------------------------------------------------------
// Shared kernels
// ----------------------------------------------------------------------

/// Ensure a zeroed gradient buffer exists for node `idx`, then let `f`
/// accumulate into it.
fn acc<S: Scalar>(
    grads: &mut [Option<Vec<S>>],
    idx: usize,
    nodes: &[Node<S>],
    f: impl FnOnce(&mut [S]),
) {
    let slot = &mut grads[idx];
    let buf = slot.get_or_insert_with(|| vec![S::ZERO; nodes[idx].value.len()]);
    f(buf);
}

fn add_into<S: Scalar>(out: &mut [S], inc: &[S]) {
    debug_assert_eq!(out.len(), inc.len());
    for (o, &g) in out.iter_mut().zip(inc) {
        *o += g;
    }
}

/// Row mean and 1/√(var+eps), accumulated in f64 for stability.
fn row_stats<S: Scalar>(row: &[S], eps: f64) -> (S, S) {
    let n = row.len() as f64;
    let mut sum = 0.0f64;
    for &x in row {
        sum += x.to_f64();
    }
    let mean = sum / n;
    let mut var = 0.0f64;
    for &x in row {
        let d = x.to_f64() - mean;
        var += d * d;
    }
    var /= n;
    (S::from_f64(mean), S::from_f64(1.0 / (var + eps).sqrt()))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

fn gelu_forward<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let a = S::from_f64(GELU_A);
    let half = S::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (S::ONE + u.tanh())
}

fn gelu_derivative<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let half = S::from_f64(0.5);
    let u = c * (x + S::from_f64(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = c * (S::ONE + S::from_f64(3.0 * GELU_A) * x * x);
    half * (S::ONE + t) + half * x * (S::ONE - t * t) * du
}

/// −log softmax(row)[target], computed with max subtraction in f64.
fn row_neg_log_prob<S: Scalar>(row: &[S], target: usize) -> f64 {
    let mut max = row[0];
    for &x in &row[1..] {
        max = max.maximum(x);
    }
    let mut sum = 0.0f64;
    for &x in row {
        sum += (x - max).to_f64().exp();
    }
    max.to_f64() + sum.ln() - row[target].to_f64()
}

/// cos/sin per (t, pair index), precomputed in f64.
fn rotary_table(t_len: usize, pos_offset: usize, rotary_dim: usize, base: f64) -> Vec<(f64, f64)> {
    let half = rotary_dim / 2;
    let mut table = Vec::with_capacity(t_len * half);
    for t in 0..t_len {
        let pos = (t + pos_offset) as f64;
        for i in 0..half {
            let theta = pos * base.powf(-2.0 * i as f64 / rotary_dim as f64);
            table.push((theta.cos(), theta.sin()));
        }
    }
    table
}

/// Rotate channel pairs in place; `INVERSE` applies the transposed rotation
/// (exact gradient, since rotations are orthogonal).
fn apply_rotary<S: Scalar, const INVERSE: bool>(
    data: &mut [S],
    shape: &[usize],
    rotary_dim: usize,
    table: &[(f64, f64)],
) {
    let (b, h, t_len, hd) = (shape[0], shape[1], shape[2], shape[3]);
    let half = rotary_dim / 2;
    for bi in 0..b * h {
        for t in 0..t_len {
            let row = &mut data[(bi * t_len + t) * hd..(bi * t_len + t) * hd + rotary_dim];
            for i in 0..half {
                let (cos, sin) = table[t * half + i];
                let (cos, sin) = (S::from_f64(cos), S::from_f64(if INVERSE { -sin } else { sin }));
                let (x0, x1) = (row[2 * i], row[2 * i + 1]);
                row[2 * i] = x0 * cos - x1 * sin;
                row[2 * i + 1] = x0 * sin + x1 * cos;
            }
        }
    }
}

fn swap_axes_copy<S: Scalar>(data: &[S], shape: &[usize]) -> Vec<S> {
    let (b, x, y, d) = (shape[0], shape[1], shape[2], shape[3]);
    let mut out = vec![S::ZERO; data.len()];
    for bi in 0..b {
        for xi in 0..x {
            for yi in 0..y {
                let src = ((bi * x + xi) * y + yi) * d;
                let dst = ((bi * y + yi) * x + xi) * d;
                out[dst..dst + d].copy_from_slice(&data[src..src + d]);
            }
        }
    }
    out
}

fn backward_matmul<S: Scalar>(
    grads: &mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    grad: &[S],
    a: usize,
    b: usize,
    trans_b: bool,
    groups: usize,
) {
    let sa = nodes[a].value.shape();
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let n = grad.len() / (groups * m);
    let va = nodes[a].value.clone();
    let vb = nodes[b].value.clone();
    // dA = G · B(ᵀ): [m,n]·[n,k] — for trans_b the stored B is already
    // [n,k]; otherwise view B [k,n] transposed.
    acc(grads, a, nodes, |ga| unsafe {
        let (rsb, csb) = if trans_b { (k as isize, 1) } else { (1, n as isize) };
        for gi in 0..groups {
            S::gemm(
                m, n, k, S::ONE,
                grad.as_ptr().add(gi * m * n), n as isize, 1,
                vb.data().as_ptr().add(gi * k * n), rsb, csb,
                S::ONE, ga.as_mut_ptr().add(gi * m * k), k as isize, 1,
            );
        }
    });
    if trans_b {
        // C = A·Bᵀ ⇒ dB [n,k] = Gᵀ [n,m] · A [m,k].
        acc(grads, b, nodes, |gb| unsafe {
            for gi in 0..groups {
                S::gemm(
                    n, m, k, S::ONE,
                    grad.as_ptr().add(gi * m * n), 1, n as isize,
                    va.data().as_ptr().add(gi * m * k), k as isize, 1,
                    S::ONE, gb.as_mut_ptr().add(gi * n * k), k as isize, 1,
                );
            }
        });
    } else {
        // C = A·B ⇒ dB [k,n] = Aᵀ [k,m] · G [m,n].
        acc(grads, b, nodes, |gb| unsafe {
            for gi in 0..groups {
                S::gemm(
                    k, m, n, S::ONE,
                    va.data().as_ptr().add(gi * m * k), 1, k as isize,
                    grad.as_ptr().add(gi * m * n), n as isize, 1,
                    S::ONE, gb.as_mut_ptr().add(gi * k * n), n as isize, 1,
                );
            }
        });
    }
}

fn backward_layer_norm<S: Scalar>(
    grads: &mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    grad: &[S],
    a: usize,
    gain: usize,
    bias: usize,
    eps: f64,
) {
    let va = nodes[a].value.clone();
    let vg = nodes[gain].value.clone();
    let d = vg.len();
    acc(grads, a, nodes, |ga| {
        for (r, (row, g_row)) in va
            .data()
            .chunks_exact(d)
            .zip(grad.chunks_exact(d))
            .enumerate()
        {
            let (mean, inv) = row_stats(row, eps);
            // h = g ⊙ gain; dx = inv·(h − mean(h) − x̂·mean(h⊙x̂)).
            let mut h_mean = 0.0f64;
            let mut hx_mean = 0.0f64;
            for (i, (&x, &g)) in row.iter().zip(g_row).enumerate() {
                let h = (g * vg.data()[i]).to_f64();
                let xn = ((x - mean) * inv).to_f64();
                h_mean += h;
                hx_mean += h * xn;
            }
            h_mean /= d as f64;
            hx_mean /= d as f64;
            let (h_mean, hx_mean) = (S::from_f64(h_mean), S::from_f64(hx_mean));
            let out = &mut ga[r * d..(r + 1) * d];
            for (i, (&x, &g)) in row.iter().zip(g_row).enumerate() {
                let h = g * vg.data()[i];
                let xn = (x - mean) * inv;
                out[i] += inv * (h - h_mean - xn * hx_mean);
            }
        }
    });
    acc(grads, gain, nodes, |gg| {
        for (row, g_row) in va.data().chunks_exact(d).zip(grad.chunks_exact(d)) {
            let (mean, inv) = row_stats(row, eps);
            for (i, (&x, &g)) in row.iter().zip(g_row).enumerate() {
                gg[i] += g * (x - mean) * inv;
            }
        }
    });
    acc(grads, bias, nodes, |gb| {
        for g_row in grad.chunks_exact(d) {
            add_into(gb, g_row);
        }
    });
}

fn backward_cross_entropy<S: Scalar>(
    grads: &mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    upstream: S,
    logits: usize,
    targets: &[u32],
) {
    let v = nodes[logits].value.clone();
    let vocab = *v.shape().last().unwrap();
    let count = targets.iter().filter(|&&t| t != IGNORE_TOKEN).count();
    let scale = S::from_f64(upstream.to_f64() / count as f64);
    acc(grads, logits, nodes, |gl| {
        for (r, (row, &target)) in v.data().chunks_exact(vocab).zip(targets).enumerate() {
            if target == IGNORE_TOKEN {
                continue;
            }
            let mut max = row[0];
            for &x in &row[1..] {
                max = max.maximum(x);
            }
            let mut sum = 0.0f64;
            for &x in row {
                sum += (x - max).to_f64().exp();
            }
            let inv = S::from_f64(1.0 / sum);
            let out = &mut gl[r * vocab..(r + 1) * vocab];
            for (i, (&x, o)) in row.iter().zip(out.iter_mut()).enumerate() {
                let mut p = (x - max).exp() * inv;
                if i == target as usize {
                    p -= S::ONE;
                }
                *o += p * scale;
            }
        }
    });
}
