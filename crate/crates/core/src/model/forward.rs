//! Forward pass, training loss, and the key/value cache.
//!
//! Activations flow as `[batch·seq, d_model]` matrices so every linear layer
//! is one gemm; attention temporarily reshapes to `[batch, heads, seq,
//! head_dim]`. The same code path serves full-sequence training and
//! incremental decoding: with a cache attached, new keys and values are
//! concatenated onto the cached ones and the causal mask shifts by the
//! cached length automatically (it is derived from the query/key shapes).

use super::{Model, Params};
use crate::tensor::{Scalar, Tape, Tensor, Var, IGNORE_TOKEN};

/// Tape handles for every parameter, aligned with the registry order.
/// Created once per tape by [`Model::bind`]; gradient lookups go through
/// [`Bound::var`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// The tape handle of a named parameter.
    pub fn var<S: Scalar>(&self, params: &Params<S>, name: &str) -> Var {
        self.vars[params.position(name)]
    }

    /// (name, var) pairs in registry order.
    pub fn iter<'p, S: Scalar>(
        &'p self,
        params: &'p Params<S>,
    ) -> impl Iterator<Item = (&'p str, Var)> + 'p {
        params
            .iter()
            .zip(&self.vars)
            .map(|((name, _), &var)| (name, var))
    }
}

/// Cached keys and values per layer, each `[batch, heads, past_len,
/// head_dim]`. Grows along the time axis as decoding proceeds.
pub struct KvCache<S: Scalar> {
    layers: Vec<Option<(Tensor<S>, Tensor<S>)>>,
    len: usize,
}

impl<S: Scalar> KvCache<S> {
    pub fn new(n_layers: usize) -> Self {
        Self {
            layers: (0..n_layers).map(|_| None).collect(),
            len: 0,
        }
    }

    /// Number of positions already cached.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl<S: Scalar> Model<S> {
    /// Put every parameter on the tape as a leaf. One bind per tape.
    pub fn bind(&self, tape: &Tape<S>) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(_, t)| tape.leaf(t.clone()))
                .collect(),
        }
    }

    /// Run the transformer over `ids` (row-major `[batch, seq]`) and return
    /// logits `[batch·seq, vocab]`. With `cache`, `ids` holds only the new
    /// positions; cached keys/values supply the left context and the cache
    /// is extended in place.
    pub fn forward(
        &self,
        tape: &Tape<S>,
        bound: &Bound,
        ids: &[u32],
        batch: usize,
        mut cache: Option<&mut KvCache<S>>,
    ) -> Var {
        let cfg = &self.config;
        assert!(batch > 0 && !ids.is_empty(), "forward: empty input");
        assert_eq!(ids.len() % batch, 0, "forward: ids not divisible by batch");
        let seq = ids.len() / batch;
        let past = cache.as_ref().map_or(0, |c| c.len);
        assert!(
            past + seq <= cfg.max_seq_len,
            "forward: {past} cached + {seq} new positions exceed max_seq_len {}",
            cfg.max_seq_len
        );
        let (d, heads, hd) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
        let p = |name: &str| bound.var(&self.params, name);

        let emb = tape.embedding(p("wte"), ids, &[batch, seq]);
        let mut x = tape.reshape(emb, &[batch * seq, d]);

        for i in 0..cfg.n_layers {
            let lp = |s: &str| format!("layers.{i}.{s}");
            let h = tape.layer_norm(x, p(&lp("ln.gain")), p(&lp("ln.bias")), cfg.ln_eps);

            // Attention path: fused qkv, rotary on q/k, causal mix.
            let qkv = tape.matmul_nt(h, p(&lp("attn.qkv.weight")));
            let to_heads = |z: Var| {
                let z = tape.reshape(z, &[batch, seq, heads, hd]);
                tape.swap_axes_1_2(z) // [batch, heads, seq, hd]
            };
            let q = to_heads(tape.narrow(qkv, 1, 0, d));
            let k = to_heads(tape.narrow(qkv, 1, d, d));
            let v = to_heads(tape.narrow(qkv, 1, 2 * d, d));
            let q = tape.rotary(q, cfg.rotary_dim, past, cfg.rotary_base);
            let mut k = tape.rotary(k, cfg.rotary_dim, past, cfg.rotary_base);
            let mut v = v;
            if let Some(c) = cache.as_mut() {
                if let Some((pk, pv)) = &c.layers[i] {
                    let pk = tape.leaf(pk.clone());
                    let pv = tape.leaf(pv.clone());
                    k = tape.concat_axis2(pk, k);
                    v = tape.concat_axis2(pv, v);
                }
                c.layers[i] = Some((tape.value(k), tape.value(v)));
            }
            let s_len = past + seq;
            let q3 = tape.reshape(q, &[batch * heads, seq, hd]);
            let k3 = tape.reshape(k, &[batch * heads, s_len, hd]);
            let scores = tape.bmm_nt(q3, k3);
            let scores = tape.scale(scores, 1.0 / (hd as f64).sqrt());
            let scores = tape.reshape(scores, &[batch, heads, seq, s_len]);
            let probs = tape.causal_softmax(scores);
            let probs = tape.reshape(probs, &[batch * heads, seq, s_len]);
            let v3 = tape.reshape(v, &[batch * heads, s_len, hd]);
            let ctx = tape.bmm(probs, v3);
            let ctx = tape.reshape(ctx, &[batch, heads, seq, hd]);
            let ctx = tape.swap_axes_1_2(ctx); // [batch, seq, heads, hd]
            let ctx = tape.reshape(ctx, &[batch * seq, d]);
            let attn = tape.matmul_nt(ctx, p(&lp("attn.out.weight")));

            // Feed-forward path, fed by the same normalized input.
            let m = tape.matmul_nt(h, p(&lp("mlp.fc_in.weight")));
            let m = tape.add_bias(m, p(&lp("mlp.fc_in.bias")));
            let m = tape.gelu(m);
            let m = tape.matmul_nt(m, p(&lp("mlp.fc_out.weight")));
            let m = tape.add_bias(m, p(&lp("mlp.fc_out.bias")));

            // Parallel residual: both paths join the stream at once.
            let x1 = tape.add(x, attn);
            x = tape.add(x1, m);
        }

        if let Some(c) = cache.as_mut() {
            c.len += seq;
        }

        let xf = tape.layer_norm(x, p("ln_f.gain"), p("ln_f.bias"), cfg.ln_eps);
        let head = if cfg.tie_embeddings {
            p("wte")
        } else {
            p("lm_head.weight")
        };
        let logits = tape.matmul_nt(xf, head);
        tape.add_bias(logits, p("lm_head.bias"))
    }

    /// Next-token cross-entropy over a batch of windows.
    ///
    /// `window` is row-major `[batch, row_len]`; each row contributes
    /// `row_len − 1` predictions (position j predicts token j+1). Targets
    /// equal to `pad_id` are excluded from the loss, so right-padded rows
    /// train only on their real content.
    pub fn lm_loss(
        &self,
        tape: &Tape<S>,
        bound: &Bound,
        window: &[u32],
        batch: usize,
        pad_id: Option<u32>,
    ) -> Var {
        assert!(batch > 0, "lm_loss: empty batch");
        assert_eq!(window.len() % batch, 0, "lm_loss: ragged batch");
        let row_len = window.len() / batch;
        assert!(row_len >= 2, "lm_loss: rows must hold at least two tokens");
        let seq = row_len - 1;
        let mut inputs = Vec::with_capacity(batch * seq);
        let mut targets = Vec::with_capacity(batch * seq);
        for row in window.chunks_exact(row_len) {
            inputs.extend_from_slice(&row[..seq]);
            targets.extend(row[1..].iter().map(|&t| {
                if Some(t) == pad_id {
                    IGNORE_TOKEN
                } else {
                    t
                }
            }));
        }
        let logits = self.forward(tape, bound, &inputs, batch, None);
        tape.cross_entropy_mean(logits, &targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small() -> Model<f32> {
        Model::new(
            ModelConfig {
                vocab_size: 31,
                d_model: 16,
                n_layers: 2,
                n_heads: 2,
                rotary_dim: 4,
                max_seq_len: 16,
                ..ModelConfig::tiny()
            },
            11,
        )
    }

    #[test]
    fn forward_produces_finite_logits_of_the_right_shape() {
        let model = small();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let ids: Vec<u32> = (0..12).map(|i| i % 31).collect();
        let logits = model.forward(&tape, &bound, &ids, 2, None);
        tape.health().unwrap();
        assert_eq!(tape.value(logits).shape(), &[12, 31]);
    }

    #[test]
    fn causality_prefix_logits_do_not_depend_on_suffix() {
        let model = small();
        let prefix: Vec<u32> = vec![1, 2, 3, 4];
        let full_a: Vec<u32> = vec![1, 2, 3, 4, 5, 6];
        let full_b: Vec<u32> = vec![1, 2, 3, 4, 30, 7];

        let logits = |ids: &[u32]| {
            let tape = Tape::new();
            let bound = model.bind(&tape);
            let v = model.forward(&tape, &bound, ids, 1, None);
            tape.value(v)
        };
        let la = logits(&full_a);
        let lb = logits(&full_b);
        let lp = logits(&prefix);
        let v = model.config.vocab_size;
        // Positions 0..4 are identical whatever comes later.
        assert_eq!(la.data()[..4 * v], lb.data()[..4 * v]);
        assert_eq!(la.data()[..4 * v], lp.data()[..]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let model = small();
        let run = |rows: &[u32], batch: usize| {
            let tape = Tape::new();
            let bound = model.bind(&tape);
            let v = model.forward(&tape, &bound, rows, batch, None);
            tape.value(v)
        };
        let row_a = [3u32, 1, 4, 1];
        let row_b = [2u32, 7, 1, 8];
        let batched = run(&[row_a, row_b].concat(), 2);
        let single = run(&row_a, 1);
        let v = model.config.vocab_size;
        for (x, y) in batched.data()[..4 * v].iter().zip(single.data()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn lm_loss_starts_near_uniform_entropy() {
        // Fresh weights are near zero, so the head is near uniform and the
        // loss is near ln(vocab).
        let model = small();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let window: Vec<u32> = (0..20).map(|i| (i * 7 + 3) % 31).collect();
        let loss = model.lm_loss(&tape, &bound, &window, 2, None);
        let got = tape.value(loss).data()[0];
        let uniform = (31.0f32).ln();
        assert!(
            (got - uniform).abs() < 0.5,
            "initial loss {got} far from ln(V) = {uniform}"
        );
    }

    #[test]
    fn lm_loss_ignores_padded_targets() {
        let model = small();
        let pad = 30u32;
        // Row content [5, 9, 2] then padding; the padded window must produce
        // the same loss as the unpadded one (pads contribute nothing).
        let run = |window: &[u32], pad_id: Option<u32>| {
            let tape = Tape::new();
            let bound = model.bind(&tape);
            let loss = model.lm_loss(&tape, &bound, window, 1, pad_id);
            tape.value(loss).data()[0]
        };
        let unpadded = run(&[5, 9, 2], None);
        let padded = run(&[5, 9, 2, pad, pad], Some(pad));
        assert!(
            (unpadded - padded).abs() < 1e-5,
            "{unpadded} vs {padded}"
        );
    }

    #[test]
    fn gradients_flow_to_every_parameter() {
        let model = small();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let window: Vec<u32> = (0..10).map(|i| (i * 3 + 1) % 31).collect();
        let loss = model.lm_loss(&tape, &bound, &window, 1, None);
        let grads = tape.backward(loss).unwrap();
        for (name, var) in bound.iter(&model.params) {
            let g = grads
                .wrt(var)
                .unwrap_or_else(|| panic!("no gradient for {name}"));
            assert!(
                g.data().iter().any(|&x| x != 0.0),
                "gradient for {name} is identically zero"
            );
        }
    }

    #[test]
    fn tied_embeddings_accumulate_both_paths() {
        let tied = Model::<f32>::new(
            ModelConfig {
                vocab_size: 31,
                d_model: 16,
                n_layers: 1,
                n_heads: 2,
                rotary_dim: 4,
                max_seq_len: 16,
                tie_embeddings: true,
                ..ModelConfig::tiny()
            },
            11,
        );
        let tape = Tape::new();
        let bound = tied.bind(&tape);
        let loss = tied.lm_loss(&tape, &bound, &[1, 2, 3, 4], 1, None);
        let grads = tape.backward(loss).unwrap();
        let wte = grads.wrt(bound.var(&tied.params, "wte")).unwrap();
        // Rows of unused tokens still get head gradients through the tie.
        let d = tied.config.d_model;
        let unused_row = &wte.data()[20 * d..21 * d];
        assert!(unused_row.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn cached_forward_matches_full_forward() {
        let model = small();
        let ids: Vec<u32> = vec![4, 8, 15, 16, 23];

        // Full pass over the whole sequence.
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let full = model.forward(&tape, &bound, &ids, 1, None);
        let full = tape.value(full);
        let v = model.config.vocab_size;

        // Incremental: prompt prefix, then one token at a time.
        let mut cache = KvCache::new(model.config.n_layers);
        let tape2 = Tape::new();
        let bound2 = model.bind(&tape2);
        let first = model.forward(&tape2, &bound2, &ids[..2], 1, Some(&mut cache));
        let mut rows: Vec<Vec<f32>> = tape2
            .value(first)
            .data()
            .chunks_exact(v)
            .map(<[f32]>::to_vec)
            .collect();
        for &next in &ids[2..] {
            let tape_i = Tape::new();
            let bound_i = model.bind(&tape_i);
            let step = model.forward(&tape_i, &bound_i, &[next], 1, Some(&mut cache));
            rows.push(tape_i.value(step).data().to_vec());
        }
        assert_eq!(cache.len(), ids.len());
        for (t, row) in rows.iter().enumerate() {
            for (a, b) in row.iter().zip(&full.data()[t * v..(t + 1) * v]) {
                assert!(
                    (a - b).abs() < 1e-4,
                    "position {t}: cached {a} vs full {b}"
                );
            }
        }
    }
}
