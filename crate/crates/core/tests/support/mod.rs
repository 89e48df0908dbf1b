//! Shared oracles for integration tests.
//!
//! Everything here re-derives expected results by the most direct method
//! available — finite differences, full recounting, one-step hand algebra —
//! without touching the production code paths it checks. Slower and simpler
//! by design: these are the referees, not the players.

#![allow(dead_code)] // each test binary uses its own subset

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Deterministic pseudorandom values in `[lo, hi)`.
pub fn seeded_uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Central-difference gradients of `f` with respect to every element of
/// every input, evaluated entirely through forward passes.
pub fn fd_gradients(
    inputs: &[Vec<f64>],
    eps: f64,
    f: impl Fn(&[Vec<f64>]) -> f64,
) -> Vec<Vec<f64>> {
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i][j] += eps;
            let mut minus = inputs.to_vec();
            minus[i][j] -= eps;
            g[j] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Assert two slices agree within `atol + rtol·|want|` per element.
pub fn assert_close_slices(got: &[f64], want: &[f64], atol: f64, rtol: f64, label: &str) {
    assert_eq!(got.len(), want.len(), "{label}: length mismatch");
    for (i, (&g, &w)) in got.iter().zip(want).enumerate() {
        let tol = atol + rtol * w.abs();
        assert!(
            (g - w).abs() <= tol,
            "{label}[{i}]: got {g}, want {w} (diff {}, tol {tol})",
            (g - w).abs()
        );
    }
}

// ----------------------------------------------------------------------
// Naive BPE reference
// ----------------------------------------------------------------------

/// Reference BPE trainer: keeps every word occurrence separately and
/// recounts all pairs from scratch after each merge. O(merges × corpus) but
/// unquestionably correct. Returns the learned merge rules and the byte
/// content of every token (base bytes + merged).
pub fn naive_bpe(units: &[&str], max_merges: usize) -> (Vec<(u32, u32)>, Vec<Vec<u8>>) {
    let mut vocab: Vec<Vec<u8>> = (0u16..256).map(|b| vec![b as u8]).collect();
    let mut words: Vec<Vec<u32>> = units
        .iter()
        .map(|u| u.bytes().map(u32::from).collect())
        .collect();
    let mut merges = Vec::new();

    while merges.len() < max_merges {
        // Full recount.
        let mut counts: std::collections::BTreeMap<(u32, u32), u64> = Default::default();
        for w in &words {
            for win in w.windows(2) {
                *counts.entry((win[0], win[1])).or_insert(0) += 1;
            }
        }
        // Select: max count, then smallest fused bytes, then smallest left
        // bytes, then smallest ids.
        let mut best: Option<((u32, u32), u64)> = None;
        for (&pair, &count) in &counts {
            let replace = match best {
                None => true,
                Some((bp, bc)) => {
                    if count != bc {
                        count > bc
                    } else {
                        let cat = |p: (u32, u32)| {
                            let mut c = vocab[p.0 as usize].clone();
                            c.extend_from_slice(&vocab[p.1 as usize]);
                            c
                        };
                        (cat(pair), vocab[pair.0 as usize].clone(), pair.0, pair.1)
                            < (cat(bp), vocab[bp.0 as usize].clone(), bp.0, bp.1)
                    }
                }
            };
            if replace {
                best = Some((pair, count));
            }
        }
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let new_id = vocab.len() as u32;
        let mut fused = vocab[pair.0 as usize].clone();
        fused.extend_from_slice(&vocab[pair.1 as usize]);
        vocab.push(fused);
        merges.push(pair);
        for w in words.iter_mut() {
            *w = fuse_once(w, pair, new_id);
        }
    }
    (merges, vocab)
}

/// One left-to-right pass replacing non-overlapping occurrences of `pair`.
pub fn fuse_once(sym: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(sym.len());
    let mut i = 0;
    while i < sym.len() {
        if i + 1 < sym.len() && sym[i] == pair.0 && sym[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(sym[i]);
            i += 1;
        }
    }
    out
}

/// Reference encoder: apply the merge rules to one unit in learned order,
/// one pass each. (Rank order is exactly the order training rewrote its own
/// words, so this is the ground-truth segmentation.)
pub fn naive_apply_merges(unit: &[u8], merges: &[(u32, u32)]) -> Vec<u32> {
    let mut sym: Vec<u32> = unit.iter().map(|&b| u32::from(b)).collect();
    for (rank, &pair) in merges.iter().enumerate() {
        sym = fuse_once(&sym, pair, 256 + rank as u32);
    }
    sym
}

// ----------------------------------------------------------------------
// Straight-line transformer reference
// ----------------------------------------------------------------------

/// Shape-free view of the model hyperparameters the reference needs.
pub struct RefArch {
    pub vocab: usize,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub rotary_dim: usize,
    pub rotary_base: f64,
    pub ln_eps: f64,
    pub tied: bool,
}

/// Reference transformer forward for a single sequence, written as plain
/// nested loops in f64 — no tape, no gemm, no fused anything. Returns one
/// logit row per position. `param` fetches a named tensor's elements.
#[allow(clippy::needless_range_loop)] // index loops keep the oracle literal
pub fn reference_forward(
    arch: &RefArch,
    param: &dyn Fn(&str) -> Vec<f64>,
    ids: &[u32],
) -> Vec<Vec<f64>> {
    let (d, heads) = (arch.d, arch.heads);
    let hd = d / heads;
    let t_len = ids.len();
    let wte = param("wte");

    // Embed.
    let mut x: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| wte[id as usize * d..(id as usize + 1) * d].to_vec())
        .collect();

    for layer in 0..arch.layers {
        let name = |s: &str| format!("layers.{layer}.{s}");
        let gain = param(&name("ln.gain"));
        let bias = param(&name("ln.bias"));
        let qkv_w = param(&name("attn.qkv.weight")); // [3d, d]
        let out_w = param(&name("attn.out.weight")); // [d, d]
        let fc_in_w = param(&name("mlp.fc_in.weight")); // [4d, d]
        let fc_in_b = param(&name("mlp.fc_in.bias"));
        let fc_out_w = param(&name("mlp.fc_out.weight")); // [d, 4d]
        let fc_out_b = param(&name("mlp.fc_out.bias"));

        // Shared layer norm.
        let h: Vec<Vec<f64>> = x
            .iter()
            .map(|row| layer_norm_row(row, &gain, &bias, arch.ln_eps))
            .collect();

        // q, k, v per position (rows 0..d, d..2d, 2d..3d of the fused weight).
        let mut q = vec![vec![0.0; d]; t_len];
        let mut k = vec![vec![0.0; d]; t_len];
        let mut v = vec![vec![0.0; d]; t_len];
        for t in 0..t_len {
            for o in 0..d {
                let (mut sq, mut sk, mut sv) = (0.0, 0.0, 0.0);
                for i in 0..d {
                    sq += qkv_w[o * d + i] * h[t][i];
                    sk += qkv_w[(d + o) * d + i] * h[t][i];
                    sv += qkv_w[(2 * d + o) * d + i] * h[t][i];
                }
                q[t][o] = sq;
                k[t][o] = sk;
                v[t][o] = sv;
            }
        }

        // Rotary on the first rotary_dim channels of each head.
        for t in 0..t_len {
            for head in 0..heads {
                for i in 0..arch.rotary_dim / 2 {
                    let theta = t as f64
                        * arch
                            .rotary_base
                            .powf(-2.0 * i as f64 / arch.rotary_dim as f64);
                    let (cos, sin) = (theta.cos(), theta.sin());
                    for vec in [&mut q[t], &mut k[t]] {
                        let a = vec[head * hd + 2 * i];
                        let b = vec[head * hd + 2 * i + 1];
                        vec[head * hd + 2 * i] = a * cos - b * sin;
                        vec[head * hd + 2 * i + 1] = a * sin + b * cos;
                    }
                }
            }
        }

        // Causal attention per head.
        let mut ctx = vec![vec![0.0; d]; t_len];
        for head in 0..heads {
            for t in 0..t_len {
                let mut scores = Vec::with_capacity(t + 1);
                for s in 0..=t {
                    let mut dot = 0.0;
                    for c in 0..hd {
                        dot += q[t][head * hd + c] * k[s][head * hd + c];
                    }
                    scores.push(dot / (hd as f64).sqrt());
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|&x| (x - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for (s, &e) in exps.iter().enumerate() {
                    let p = e / total;
                    for c in 0..hd {
                        ctx[t][head * hd + c] += p * v[s][head * hd + c];
                    }
                }
            }
        }

        // Attention output projection, feed-forward, parallel residual.
        for t in 0..t_len {
            let mut attn = vec![0.0; d];
            for o in 0..d {
                for i in 0..d {
                    attn[o] += out_w[o * d + i] * ctx[t][i];
                }
            }
            let mut mid = vec![0.0; 4 * d];
            for o in 0..4 * d {
                let mut s = fc_in_b[o];
                for i in 0..d {
                    s += fc_in_w[o * d + i] * h[t][i];
                }
                mid[o] = gelu_tanh(s);
            }
            let mut mlp = vec![0.0; d];
            for o in 0..d {
                let mut s = fc_out_b[o];
                for i in 0..4 * d {
                    s += fc_out_w[o * 4 * d + i] * mid[i];
                }
                mlp[o] = s;
            }
            for o in 0..d {
                x[t][o] += attn[o] + mlp[o];
            }
        }
    }

    // Final norm and head.
    let gain = param("ln_f.gain");
    let bias = param("ln_f.bias");
    let head_w = if arch.tied {
        param("wte")
    } else {
        param("lm_head.weight")
    };
    let head_b = param("lm_head.bias");
    let mut logits = Vec::with_capacity(t_len);
    for row in &x {
        let xf = layer_norm_row(row, &gain, &bias, arch.ln_eps);
        let mut out = vec![0.0; arch.vocab];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut s = head_b[o];
            for i in 0..d {
                s += head_w[o * d + i] * xf[i];
            }
            *slot = s;
        }
        logits.push(out);
    }
    logits
}

fn layer_norm_row(row: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let mean: f64 = row.iter().sum::<f64>() / n;
    let var: f64 = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    row.iter()
        .enumerate()
        .map(|(i, &x)| (x - mean) * inv * gain[i] + bias[i])
        .collect()
}

fn gelu_tanh(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

// ----------------------------------------------------------------------
// Metric reference
// ----------------------------------------------------------------------

/// Reference F1 computation straight from per-class confusion counts.
/// Classes are `0..n_classes`; `zero_division` F1 convention: a class with
/// no predictions and no members scores 0.
pub fn naive_f1(gold: &[usize], pred: &[usize], n_classes: usize) -> (f64, f64) {
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fn_ = vec![0u64; n_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let micro = {
        let tp_sum: u64 = tp.iter().sum();
        let fp_sum: u64 = fp.iter().sum();
        let fn_sum: u64 = fn_.iter().sum();
        let denom = 2 * tp_sum + fp_sum + fn_sum;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp_sum as f64 / denom as f64
        }
    };
    let macro_ = {
        let mut sum = 0.0;
        for c in 0..n_classes {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            sum += if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            };
        }
        sum / n_classes as f64
    };
    (micro, macro_)
}
