//! A single pre-norm self-attention + MLP block with hand-written gradients.
//!
//! Forward: `x + Wo * Attn(RoPE(q), RoPE(k), v)` on LayerNorm(x), then
//! `x2 + W2 * gelu(W1 * LayerNorm(x2))`. Attention is full (every token
//! attends to every token across both segments). All internal math is f64 so
//! analytic gradients survive central-difference checks at h = 1e-3.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::rope::{rotate_head_f64, RopeConfig};
use super::stream::TokenGrid;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBlockCfg {
    pub dim: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub rope: RopeConfig,
}

impl ToyBlockCfg {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Size(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.rope.head_dim != self.dim / self.heads {
            return Err(Error::Config(format!(
                "rope head_dim {} != dim/heads = {}",
                self.rope.head_dim,
                self.dim / self.heads
            )));
        }
        self.rope.validate()
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Block parameters. Linear weights are row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBlockWeights {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ToyBlockWeights {
    pub fn init(cfg: &ToyBlockCfg, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let hidden = cfg.mlp_hidden;
        let gauss = |rng: &mut SeededRng, n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| rng.next_gaussian() * scale).collect()
        };
        let attn_scale = 1.0 / (d as f64).sqrt();
        Ok(Self {
            ln1_gamma: vec![1.0; d],
            ln1_beta: vec![0.0; d],
            wq: gauss(rng, d * d, attn_scale),
            wk: gauss(rng, d * d, attn_scale),
            wv: gauss(rng, d * d, attn_scale),
            wo: gauss(rng, d * d, attn_scale),
            bo: vec![0.0; d],
            ln2_gamma: vec![1.0; d],
            ln2_beta: vec![0.0; d],
            w1: gauss(rng, hidden * d, attn_scale),
            b1: vec![0.0; hidden],
            w2: gauss(rng, d * hidden, 1.0 / (hidden as f64).sqrt()),
            b2: vec![0.0; d],
        })
    }

    /// Zero the residual-branch output projections; the block becomes the
    /// identity map.
    pub fn zero_output_projections(&mut self) {
        self.wo.iter_mut().for_each(|w| *w = 0.0);
        self.bo.iter_mut().for_each(|w| *w = 0.0);
        self.w2.iter_mut().for_each(|w| *w = 0.0);
        self.b2.iter_mut().for_each(|w| *w = 0.0);
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Parameter gradients, same layout as [`ToyBlockWeights`].
#[derive(Debug, Clone)]
pub struct ToyBlockGrads {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ToyBlockGrads {
    pub fn zeros_like(w: &ToyBlockWeights) -> Self {
        Self {
            ln1_gamma: vec![0.0; w.ln1_gamma.len()],
            ln1_beta: vec![0.0; w.ln1_beta.len()],
            wq: vec![0.0; w.wq.len()],
            wk: vec![0.0; w.wk.len()],
            wv: vec![0.0; w.wv.len()],
            wo: vec![0.0; w.wo.len()],
            bo: vec![0.0; w.bo.len()],
            ln2_gamma: vec![0.0; w.ln2_gamma.len()],
            ln2_beta: vec![0.0; w.ln2_beta.len()],
            w1: vec![0.0; w.w1.len()],
            b1: vec![0.0; w.b1.len()],
            w2: vec![0.0; w.w2.len()],
            b2: vec![0.0; w.b2.len()],
        }
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        vec![
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.bo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct BlockCache {
    n_tokens: usize,
    x: Vec<f64>,
    n1_hat: Vec<f64>,
    n1_inv_std: Vec<f64>,
    n1: Vec<f64>,
    q_rot: Vec<f64>,
    k_rot: Vec<f64>,
    v: Vec<f64>,
    pub(crate) attn: Vec<f64>,
    ao: Vec<f64>,
    x2: Vec<f64>,
    n2_hat: Vec<f64>,
    n2_inv_std: Vec<f64>,
    n2: Vec<f64>,
    h_pre: Vec<f64>,
    h_act: Vec<f64>,
    angles: Vec<Vec<f64>>,
}

fn layer_norm_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    n: usize,
    d: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; n * d];
    let mut hat = vec![0.0; n * d];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = istd;
        for j in 0..d {
            let h = (row[j] - mean) * istd;
            hat[i * d + j] = h;
            out[i * d + j] = gamma[j] * h + beta[j];
        }
    }
    (out, hat, inv_std)
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    dy: &[f64],
    hat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    n: usize,
    d: usize,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    for i in 0..n {
        let mut mean_dhat = 0.0;
        let mut mean_dhat_hat = 0.0;
        for j in 0..d {
            let idx = i * d + j;
            dgamma[j] += dy[idx] * hat[idx];
            dbeta[j] += dy[idx];
            let dhat = dy[idx] * gamma[j];
            mean_dhat += dhat;
            mean_dhat_hat += dhat * hat[idx];
        }
        mean_dhat /= d as f64;
        mean_dhat_hat /= d as f64;
        for j in 0..d {
            let idx = i * d + j;
            let dhat = dy[idx] * gamma[j];
            dx[idx] = inv_std[i] * (dhat - mean_dhat - hat[idx] * mean_dhat_hat);
        }
    }
    dx
}

fn linear_forward(
    w: &[f64],
    b: Option<&[f64]>,
    x: &[f64],
    n: usize,
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; n * out_dim];
    for i in 0..n {
        let row_in = &x[i * in_dim..(i + 1) * in_dim];
        for o in 0..out_dim {
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = wrow.iter().zip(row_in).map(|(a, b)| a * b).sum::<f64>();
            if let Some(bias) = b {
                acc += bias[o];
            }
            y[i * out_dim + o] = acc;
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn linear_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    n: usize,
    in_dim: usize,
    out_dim: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; n * in_dim];
    for i in 0..n {
        let row_in = &x[i * in_dim..(i + 1) * in_dim];
        for o in 0..out_dim {
            let g = dy[i * out_dim + o];
            if g == 0.0 {
                continue;
            }
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
            for j in 0..in_dim {
                dwrow[j] += g * row_in[j];
                dx[i * in_dim + j] += g * wrow[j];
            }
        }
    }
    if let Some(db) = db {
        for i in 0..n {
            for o in 0..out_dim {
                db[o] += dy[i * out_dim + o];
            }
        }
    }
    dx
}

const GELU_S: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_S * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_S * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_S * (1.0 + 3.0 * GELU_C * x * x)
}

/// f64 forward pass over flat `[N, D]` tokens.
pub(crate) fn forward_f64(
    weights: &ToyBlockWeights,
    cfg: &ToyBlockCfg,
    x: &[f64],
    positions: &[[i64; 3]],
) -> Result<(Vec<f64>, BlockCache)> {
    cfg.validate()?;
    let d = cfg.dim;
    let n = positions.len();
    if x.len() != n * d {
        return Err(Error::Size(format!(
            "token buffer holds {} values, expected {} x {}",
            x.len(),
            n,
            d
        )));
    }
    let heads = cfg.heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();

    let (n1, n1_hat, n1_inv_std) =
        layer_norm_forward(x, &weights.ln1_gamma, &weights.ln1_beta, n, d);

    let mut q = linear_forward(&weights.wq, None, &n1, n, d, d);
    let mut k = linear_forward(&weights.wk, None, &n1, n, d, d);
    let v = linear_forward(&weights.wv, None, &n1, n, d, d);

    let angles: Vec<Vec<f64>> = positions.iter().map(|&p| cfg.rope.angles(p)).collect();
    for i in 0..n {
        for h in 0..heads {
            let off = i * d + h * hd;
            rotate_head_f64(&mut q[off..off + hd], &angles[i], false);
            rotate_head_f64(&mut k[off..off + hd], &angles[i], false);
        }
    }

    // Full attention, one [N, N] matrix per head.
    let mut attn = vec![0.0; heads * n * n];
    let mut ao = vec![0.0; n * d];
    for h in 0..heads {
        for i in 0..n {
            let qrow = &q[i * d + h * hd..i * d + h * hd + hd];
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let krow = &k[j * d + h * hd..j * d + h * hd + hd];
                    qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for j in 0..n {
                let a = exps[j] / denom;
                attn[(h * n + i) * n + j] = a;
                let vrow = &v[j * d + h * hd..j * d + h * hd + hd];
                for c in 0..hd {
                    ao[i * d + h * hd + c] += a * vrow[c];
                }
            }
        }
    }

    let o = linear_forward(&weights.wo, Some(&weights.bo), &ao, n, d, d);
    let x2: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();

    let (n2, n2_hat, n2_inv_std) =
        layer_norm_forward(&x2, &weights.ln2_gamma, &weights.ln2_beta, n, d);
    let h_pre = linear_forward(&weights.w1, Some(&weights.b1), &n2, n, d, cfg.mlp_hidden);
    let h_act: Vec<f64> = h_pre.iter().map(|&v| gelu(v)).collect();
    let m = linear_forward(&weights.w2, Some(&weights.b2), &h_act, n, cfg.mlp_hidden, d);
    let out: Vec<f64> = x2.iter().zip(&m).map(|(a, b)| a + b).collect();

    let cache = BlockCache {
        n_tokens: n,
        x: x.to_vec(),
        n1_hat,
        n1_inv_std,
        n1,
        q_rot: q,
        k_rot: k,
        v,
        attn,
        ao,
        x2,
        n2_hat,
        n2_inv_std,
        n2,
        h_pre,
        h_act,
        angles,
    };
    Ok((out, cache))
}

/// f64 backward pass; returns the input gradient.
pub(crate) fn backward_f64(
    weights: &ToyBlockWeights,
    cfg: &ToyBlockCfg,
    cache: &BlockCache,
    dout: &[f64],
    grads: &mut ToyBlockGrads,
) -> Vec<f64> {
    let d = cfg.dim;
    let n = cache.n_tokens;
    let heads = cfg.heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();

    // out = x2 + m
    let dm = dout;
    let mut dx2: Vec<f64> = dout.to_vec();

    // m = W2 h_act + b2
    let dh_act = linear_backward(
        &weights.w2,
        &cache.h_act,
        dm,
        n,
        cfg.mlp_hidden,
        d,
        &mut grads.w2,
        Some(&mut grads.b2),
    );
    let dh_pre: Vec<f64> = dh_act
        .iter()
        .zip(&cache.h_pre)
        .map(|(g, &pre)| g * gelu_grad(pre))
        .collect();
    let dn2 = linear_backward(
        &weights.w1,
        &cache.n2,
        &dh_pre,
        n,
        d,
        cfg.mlp_hidden,
        &mut grads.w1,
        Some(&mut grads.b1),
    );
    let dx2_ln = layer_norm_backward(
        &dn2,
        &cache.n2_hat,
        &cache.n2_inv_std,
        &weights.ln2_gamma,
        n,
        d,
        &mut grads.ln2_gamma,
        &mut grads.ln2_beta,
    );
    for (a, b) in dx2.iter_mut().zip(&dx2_ln) {
        *a += b;
    }

    // x2 = x + o
    let mut dx: Vec<f64> = dx2.clone();
    let dao = linear_backward(
        &weights.wo,
        &cache.ao,
        &dx2,
        n,
        d,
        d,
        &mut grads.wo,
        Some(&mut grads.bo),
    );

    // Attention backward.
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    for h in 0..heads {
        for i in 0..n {
            let dao_row = &dao[i * d + h * hd..i * d + h * hd + hd];
            // dA_ij = <dao_i, v_j>, dv_j += a_ij dao_i
            let mut d_attn = vec![0.0; n];
            for j in 0..n {
                let a = cache.attn[(h * n + i) * n + j];
                let vrow = &cache.v[j * d + h * hd..j * d + h * hd + hd];
                let mut dot = 0.0;
                for c in 0..hd {
                    dot += dao_row[c] * vrow[c];
                    dv[j * d + h * hd + c] += a * dao_row[c];
                }
                d_attn[j] = dot;
            }
            // Softmax backward on the row.
            let arow = &cache.attn[(h * n + i) * n..(h * n + i) * n + n];
            let inner: f64 = arow.iter().zip(&d_attn).map(|(a, g)| a * g).sum();
            for j in 0..n {
                let dlogit = arow[j] * (d_attn[j] - inner);
                if dlogit == 0.0 {
                    continue;
                }
                let krow = &cache.k_rot[j * d + h * hd..j * d + h * hd + hd];
                let qrow = &cache.q_rot[i * d + h * hd..i * d + h * hd + hd];
                for c in 0..hd {
                    dq[i * d + h * hd + c] += dlogit * krow[c] * scale;
                    dk[j * d + h * hd + c] += dlogit * qrow[c] * scale;
                }
            }
        }
    }

    // RoPE backward: rotate gradients by the inverse rotation.
    for i in 0..n {
        for h in 0..heads {
            let off = i * d + h * hd;
            rotate_head_f64(&mut dq[off..off + hd], &cache.angles[i], true);
            rotate_head_f64(&mut dk[off..off + hd], &cache.angles[i], true);
        }
    }

    let dn1_q = linear_backward(&weights.wq, &cache.n1, &dq, n, d, d, &mut grads.wq, None);
    let dn1_k = linear_backward(&weights.wk, &cache.n1, &dk, n, d, d, &mut grads.wk, None);
    let dn1_v = linear_backward(&weights.wv, &cache.n1, &dv, n, d, d, &mut grads.wv, None);
    let dn1: Vec<f64> = (0..n * d).map(|i| dn1_q[i] + dn1_k[i] + dn1_v[i]).collect();

    let dx_ln = layer_norm_backward(
        &dn1,
        &cache.n1_hat,
        &cache.n1_inv_std,
        &weights.ln1_gamma,
        n,
        d,
        &mut grads.ln1_gamma,
        &mut grads.ln1_beta,
    );
    for (a, b) in dx.iter_mut().zip(&dx_ln) {
        *a += b;
    }
    dx
}

/// Run one block over a token grid (the f32 spec-facing wrapper).
pub fn toy_block_forward(
    tokens: &TokenGrid,
    weights: &ToyBlockWeights,
    cfg: &ToyBlockCfg,
) -> Result<TokenGrid> {
    let n = tokens.len();
    let d = tokens.dim();
    if d != cfg.dim {
        return Err(Error::Size(format!(
            "token dim {} does not match block dim {}",
            d, cfg.dim
        )));
    }
    let x: Vec<f64> = tokens.tokens.data().iter().map(|&v| v as f64).collect();
    let (out, _) = forward_f64(weights, cfg, &x, &tokens.positions)?;
    let data: Vec<f32> = out.into_iter().map(|v| v as f32).collect();
    Ok(TokenGrid {
        tokens: Tensor::from_vec(&[n, d], data)?,
        positions: tokens.positions.clone(),
        segments: tokens.segments.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::stream::Segment;

    fn cfg() -> ToyBlockCfg {
        ToyBlockCfg {
            dim: 32,
            heads: 4,
            mlp_hidden: 48,
            rope: RopeConfig::for_head_dim(8).unwrap(),
        }
    }

    fn random_tokens(n: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<[i64; 3]>) {
        let mut rng = SeededRng::new(seed, 0);
        let x: Vec<f64> = (0..n * d).map(|_| rng.next_gaussian() * 0.5).collect();
        let positions: Vec<[i64; 3]> = (0..n)
            .map(|i| [(i / 4) as i64, ((i / 2) % 2) as i64, (i % 2) as i64])
            .collect();
        (x, positions)
    }

    #[test]
    fn zeroed_output_projections_make_the_block_identity() {
        let cfg = cfg();
        let mut rng = SeededRng::new(3, 0);
        let mut weights = ToyBlockWeights::init(&cfg, &mut rng).unwrap();
        weights.zero_output_projections();
        let (x, positions) = random_tokens(12, cfg.dim, 5);
        let (out, _) = forward_f64(&weights, &cfg, &x, &positions).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = cfg();
        let mut rng = SeededRng::new(4, 0);
        let weights = ToyBlockWeights::init(&cfg, &mut rng).unwrap();
        let (x, positions) = random_tokens(10, cfg.dim, 6);
        let (_, cache) = forward_f64(&weights, &cfg, &x, &positions).unwrap();
        let n = 10;
        for h in 0..cfg.heads {
            for i in 0..n {
                let row_sum: f64 = cache.attn[(h * n + i) * n..(h * n + i) * n + n].iter().sum();
                assert!((row_sum - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn swapping_equal_position_tokens_swaps_outputs() {
        let cfg = cfg();
        let mut rng = SeededRng::new(9, 0);
        let weights = ToyBlockWeights::init(&cfg, &mut rng).unwrap();
        let (mut x, mut positions) = random_tokens(8, cfg.dim, 7);
        // Give tokens 2 and 5 identical positions.
        positions[5] = positions[2];
        let (out_a, _) = forward_f64(&weights, &cfg, &x, &positions).unwrap();

        let d = cfg.dim;
        for c in 0..d {
            x.swap(2 * d + c, 5 * d + c);
        }
        let (out_b, _) = forward_f64(&weights, &cfg, &x, &positions).unwrap();
        for c in 0..d {
            assert!((out_a[2 * d + c] - out_b[5 * d + c]).abs() < 1e-9);
            assert!((out_a[5 * d + c] - out_b[2 * d + c]).abs() < 1e-9);
        }
        // Untouched tokens keep their outputs.
        for c in 0..d {
            assert!((out_a[0 * d + c] - out_b[0 * d + c]).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_logits_are_invariant_to_global_temporal_shift() {
        let cfg = cfg();
        let mut rng = SeededRng::new(11, 0);
        let weights = ToyBlockWeights::init(&cfg, &mut rng).unwrap();
        let (x, positions) = random_tokens(10, cfg.dim, 8);
        let (_, cache_a) = forward_f64(&weights, &cfg, &x, &positions).unwrap();
        let shifted: Vec<[i64; 3]> = positions.iter().map(|p| [p[0] + 37, p[1], p[2]]).collect();
        let (_, cache_b) = forward_f64(&weights, &cfg, &x, &shifted).unwrap();
        for (a, b) in cache_a.attn.iter().zip(&cache_b.attn) {
            assert!((a - b).abs() <= 1e-4);
        }
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let cfg = ToyBlockCfg {
            dim: 16,
            heads: 2,
            mlp_hidden: 24,
            rope: RopeConfig::for_head_dim(8).unwrap(),
        };
        let mut rng = SeededRng::new(21, 0);
        let mut weights = ToyBlockWeights::init(&cfg, &mut rng).unwrap();
        let (x, positions) = random_tokens(6, cfg.dim, 9);
        // Scalar objective: weighted sum of outputs (fixed random weights).
        let probe: Vec<f64> = (0..x.len()).map(|_| rng.next_gaussian()).collect();

        let loss = |w: &ToyBlockWeights| -> f64 {
            let (out, _) = forward_f64(w, &cfg, &x, &positions).unwrap();
            out.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };

        let (_, cache) = forward_f64(&weights, &cfg, &x, &positions).unwrap();
        let mut grads = ToyBlockGrads::zeros_like(&weights);
        backward_f64(&weights, &cfg, &cache, &probe, &mut grads);

        let h = 1e-3;
        let mut checked = 0;
        let n_slices = grads.slices().len();
        for slice_idx in 0..n_slices {
            let len = grads.slices()[slice_idx].len();
            for trial in 0..10 {
                let elem = (trial * 7919 + slice_idx * 104729) % len;
                let analytic = grads.slices()[slice_idx][elem];
                let orig = weights.param_slices_mut()[slice_idx][elem];
                weights.param_slices_mut()[slice_idx][elem] = orig + h;
                let up = loss(&weights);
                weights.param_slices_mut()[slice_idx][elem] = orig - h;
                let down = loss(&weights);
                weights.param_slices_mut()[slice_idx][elem] = orig;
                let fd = (up - down) / (2.0 * h);
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((analytic - fd) / denom).abs() <= 1e-3,
                    "slice {} elem {}: analytic {} vs fd {}",
                    slice_idx,
                    elem,
                    analytic,
                    fd
                );
                checked += 1;
            }
        }
        assert!(checked >= 100);
    }

    #[test]
    fn wrapper_preserves_positions_and_segments() {
        let cfg = cfg();
        let mut rng = SeededRng::new(2, 0);
        let weights = ToyBlockWeights::init(&cfg, &mut rng).unwrap();
        let (x, positions) = random_tokens(4, cfg.dim, 3);
        let grid = TokenGrid {
            tokens: Tensor::from_vec(&[4, cfg.dim], x.iter().map(|&v| v as f32).collect())
                .unwrap(),
            positions: positions.clone(),
            segments: vec![
                Segment::Target,
                Segment::Target,
                Segment::Source,
                Segment::Source,
            ],
        };
        let out = toy_block_forward(&grid, &weights, &cfg).unwrap();
        assert_eq!(out.positions, grid.positions);
        assert_eq!(out.segments, grid.segments);
        assert_eq!(out.tokens.shape(), grid.tokens.shape());
    }
}
