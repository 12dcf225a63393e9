//! End-to-end toy model: shared patch embedding, one attention block, a
//! linear un-patchify head, and seeded Adam steps over the composite loss.
//!
//! The target pathway regresses the clean target latent from the noisy
//! anchor stream; the source pathway is pulled toward the clean source
//! latent by the L1 reference term.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::block::{
    backward_f64, forward_f64, ToyBlockCfg, ToyBlockGrads, ToyBlockWeights,
};
use super::loss::{l1_f64, mse_f64, LossBreakdown};
use super::rope::RopeConfig;
use super::stream::{ConditionStream, PatchEmbed};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelCfg {
    pub dim: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub patch: (usize, usize, usize),
    pub rope_offset: usize,
    pub alpha: f64,
}

impl Default for ToyModelCfg {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 4,
            mlp_hidden: 128,
            patch: (1, 2, 2),
            rope_offset: 50,
            alpha: 0.1,
        }
    }
}

/// Patch embedding + block + head with all parameters in f64.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub cfg: ToyModelCfg,
    pub block_cfg: ToyBlockCfg,
    pub embed: PatchEmbed,
    pub block: ToyBlockWeights,
    /// `[C_L * patch_volume, dim]` un-patchify head.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    pub latent_channels: usize,
}

#[derive(Debug, Clone)]
pub struct ToyModelGrads {
    pub embed_w: Vec<f64>,
    pub embed_b: Vec<f64>,
    pub block: ToyBlockGrads,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// One training example: the two conditioning streams plus the regression
/// targets in latent space.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub anchor: &'a ConditionStream,
    pub source: &'a ConditionStream,
    /// Clean target latent `[C_L, T_L, H_L, W_L]`.
    pub target_latent: &'a Tensor,
    /// Clean source latent `[C_L, T_L, H_L, W_L]`.
    pub source_latent: &'a Tensor,
}

impl ToyModel {
    pub fn init(
        in_channels: usize,
        latent_channels: usize,
        cfg: ToyModelCfg,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if cfg.dim % cfg.heads != 0 {
            return Err(Error::Size(format!(
                "dim {} not divisible by heads {}",
                cfg.dim, cfg.heads
            )));
        }
        let mut rope = RopeConfig::for_head_dim(cfg.dim / cfg.heads)?;
        rope.rope_offset = cfg.rope_offset;
        let block_cfg = ToyBlockCfg {
            dim: cfg.dim,
            heads: cfg.heads,
            mlp_hidden: cfg.mlp_hidden,
            rope,
        };
        let embed = PatchEmbed::new(in_channels, cfg.patch, cfg.dim, &mut rng.split(1))?;
        let block = ToyBlockWeights::init(&block_cfg, &mut rng.split(2))?;
        let head_out = latent_channels * cfg.patch.0 * cfg.patch.1 * cfg.patch.2;
        let mut head_rng = rng.split(3);
        let scale = 1.0 / (cfg.dim as f64).sqrt();
        let head_w = (0..head_out * cfg.dim)
            .map(|_| head_rng.next_gaussian() * scale)
            .collect();
        let head_b = vec![0.0; head_out];
        Ok(Self {
            cfg,
            block_cfg,
            embed,
            block,
            head_w,
            head_b,
            latent_channels,
        })
    }

    fn head_out_dim(&self) -> usize {
        self.latent_channels * self.cfg.patch.0 * self.cfg.patch.1 * self.cfg.patch.2
    }

    /// Forward pass; optionally also computes parameter gradients.
    fn run(
        &self,
        inputs: &TrainInputs,
        with_grads: bool,
    ) -> Result<(LossBreakdown, Option<ToyModelGrads>)> {
        let anchor = inputs.anchor;
        let source = inputs.source;
        if anchor.tensor.shape() != source.tensor.shape() {
            return Err(Error::Size(format!(
                "stream shapes disagree: {:?} vs {:?}",
                anchor.tensor.shape(),
                source.tensor.shape()
            )));
        }
        let c_l = self.latent_channels;
        let (t_l, h_l, w_l) = (
            anchor.latent_frames(),
            anchor.latent_height(),
            anchor.latent_width(),
        );
        let latent_shape = [c_l, t_l, h_l, w_l];
        if inputs.target_latent.shape() != latent_shape
            || inputs.source_latent.shape() != latent_shape
        {
            return Err(Error::Size(format!(
                "latent targets must be {:?}, got {:?} and {:?}",
                latent_shape,
                inputs.target_latent.shape(),
                inputs.source_latent.shape()
            )));
        }
        if self.cfg.rope_offset <= t_l {
            return Err(Error::Config(format!(
                "rope offset {} must exceed T_L = {}",
                self.cfg.rope_offset, t_l
            )));
        }

        let (a_vecs, a_pos) = self.embed.patch_vectors(anchor)?;
        let (s_vecs, s_pos) = self.embed.patch_vectors(source)?;
        let n_seg = a_vecs.len();
        let n = 2 * n_seg;
        let d = self.cfg.dim;

        let mut x = vec![0.0; n * d];
        let mut positions = Vec::with_capacity(n);
        for (i, (vec, pos)) in a_vecs.iter().zip(&a_pos).enumerate() {
            x[i * d..(i + 1) * d].copy_from_slice(&self.embed.embed_f64(vec));
            positions.push(*pos);
        }
        for (i, (vec, pos)) in s_vecs.iter().zip(&s_pos).enumerate() {
            let row = n_seg + i;
            x[row * d..(row + 1) * d].copy_from_slice(&self.embed.embed_f64(vec));
            positions.push([pos[0] + self.cfg.rope_offset as i64, pos[1], pos[2]]);
        }

        let (y, cache) = forward_f64(&self.block, &self.block_cfg, &x, &positions)?;

        // Head + un-patchify into latent-space predictions.
        let head_out = self.head_out_dim();
        let mut head_vals = vec![0.0; n * head_out];
        for i in 0..n {
            let yrow = &y[i * d..(i + 1) * d];
            for o in 0..head_out {
                let wrow = &self.head_w[o * d..(o + 1) * d];
                head_vals[i * head_out + o] =
                    wrow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() + self.head_b[o];
            }
        }
        let grid = (t_l / self.cfg.patch.0, h_l / self.cfg.patch.1, w_l / self.cfg.patch.2);
        let latent_len = c_l * t_l * h_l * w_l;
        let mut pred_target = vec![0.0; latent_len];
        let mut pred_source = vec![0.0; latent_len];
        for seg_token in 0..n_seg {
            self.scatter_head(
                &head_vals[seg_token * head_out..(seg_token + 1) * head_out],
                seg_token,
                grid,
                (t_l, h_l, w_l),
                &mut pred_target,
            );
            let src_token = n_seg + seg_token;
            self.scatter_head(
                &head_vals[src_token * head_out..(src_token + 1) * head_out],
                seg_token,
                grid,
                (t_l, h_l, w_l),
                &mut pred_source,
            );
        }

        let target_f64: Vec<f64> = inputs.target_latent.data().iter().map(|&v| v as f64).collect();
        let source_f64: Vec<f64> = inputs.source_latent.data().iter().map(|&v| v as f64).collect();
        let (mse, mse_grad) = mse_f64(&pred_target, &target_f64, with_grads);
        let (reference, l1_grad) = l1_f64(&pred_source, &source_f64, with_grads);
        let breakdown = LossBreakdown {
            mse,
            reference,
            alpha: self.cfg.alpha,
            total: mse + self.cfg.alpha * reference,
        };
        if !with_grads {
            return Ok((breakdown, None));
        }

        // Backward: loss -> head -> block -> embedding.
        let mut dhead_vals = vec![0.0; n * head_out];
        for seg_token in 0..n_seg {
            self.gather_head_grad(
                &mse_grad,
                seg_token,
                grid,
                (t_l, h_l, w_l),
                1.0,
                &mut dhead_vals[seg_token * head_out..(seg_token + 1) * head_out],
            );
            let src_token = n_seg + seg_token;
            self.gather_head_grad(
                &l1_grad,
                seg_token,
                grid,
                (t_l, h_l, w_l),
                self.cfg.alpha,
                &mut dhead_vals[src_token * head_out..(src_token + 1) * head_out],
            );
        }

        let mut dhead_w = vec![0.0; self.head_w.len()];
        let mut dhead_b = vec![0.0; head_out];
        let mut dy = vec![0.0; n * d];
        for i in 0..n {
            let yrow = &y[i * d..(i + 1) * d];
            for o in 0..head_out {
                let g = dhead_vals[i * head_out + o];
                if g == 0.0 {
                    continue;
                }
                dhead_b[o] += g;
                let wrow = &self.head_w[o * d..(o + 1) * d];
                let dwrow = &mut dhead_w[o * d..(o + 1) * d];
                for c in 0..d {
                    dwrow[c] += g * yrow[c];
                    dy[i * d + c] += g * wrow[c];
                }
            }
        }

        let mut block_grads = ToyBlockGrads::zeros_like(&self.block);
        let dx = backward_f64(&self.block, &self.block_cfg, &cache, &dy, &mut block_grads);

        let fan_in = self.embed.fan_in();
        let mut dembed_w = vec![0.0; self.embed.weight.len()];
        let mut dembed_b = vec![0.0; self.embed.bias.len()];
        let all_vecs = a_vecs.iter().chain(s_vecs.iter());
        for (i, vec) in all_vecs.enumerate() {
            for o in 0..d {
                let g = dx[i * d + o];
                if g == 0.0 {
                    continue;
                }
                dembed_b[o] += g;
                let dwrow = &mut dembed_w[o * fan_in..(o + 1) * fan_in];
                for (c, &xv) in vec.iter().enumerate() {
                    dwrow[c] += g * xv;
                }
            }
        }

        Ok((
            breakdown,
            Some(ToyModelGrads {
                embed_w: dembed_w,
                embed_b: dembed_b,
                block: block_grads,
                head_w: dhead_w,
                head_b: dhead_b,
            }),
        ))
    }

    /// Write one token's head output into its latent patch.
    fn scatter_head(
        &self,
        vals: &[f64],
        token: usize,
        grid: (usize, usize, usize),
        dims: (usize, usize, usize),
        out: &mut [f64],
    ) {
        let (p_t, p_h, p_w) = self.cfg.patch;
        let (gt, gh, gw) = grid;
        let (t_l, h_l, w_l) = dims;
        debug_assert_eq!(gt * gh * gw, out.len() / (self.latent_channels * p_t * p_h * p_w));
        let ti = token / (gh * gw);
        let yi = (token / gw) % gh;
        let xi = token % gw;
        let mut local = 0;
        for c in 0..self.latent_channels {
            for dt in 0..p_t {
                for dy in 0..p_h {
                    for dx in 0..p_w {
                        let t = ti * p_t + dt;
                        let y = yi * p_h + dy;
                        let x = xi * p_w + dx;
                        out[((c * t_l + t) * h_l + y) * w_l + x] = vals[local];
                        local += 1;
                    }
                }
            }
        }
    }

    /// Inverse of [`scatter_head`] for gradients, scaled by `weight`.
    fn gather_head_grad(
        &self,
        grad_latent: &[f64],
        token: usize,
        grid: (usize, usize, usize),
        dims: (usize, usize, usize),
        weight: f64,
        out: &mut [f64],
    ) {
        let (p_t, p_h, p_w) = self.cfg.patch;
        let (_gt, gh, gw) = grid;
        let (t_l, h_l, w_l) = dims;
        let ti = token / (gh * gw);
        let yi = (token / gw) % gh;
        let xi = token % gw;
        let mut local = 0;
        for c in 0..self.latent_channels {
            for dt in 0..p_t {
                for dy in 0..p_h {
                    for dx in 0..p_w {
                        let t = ti * p_t + dt;
                        let y = yi * p_h + dy;
                        let x = xi * p_w + dx;
                        out[local] = weight * grad_latent[((c * t_l + t) * h_l + y) * w_l + x];
                        local += 1;
                    }
                }
            }
        }
    }

    pub fn forward_loss(&self, inputs: &TrainInputs) -> Result<LossBreakdown> {
        Ok(self.run(inputs, false)?.0)
    }

    pub fn forward_backward(&self, inputs: &TrainInputs) -> Result<(LossBreakdown, ToyModelGrads)> {
        let (loss, grads) = self.run(inputs, true)?;
        Ok((loss, grads.expect("grads requested")))
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices: Vec<&mut [f64]> = vec![&mut self.embed.weight, &mut self.embed.bias];
        slices.extend(self.block.param_slices_mut());
        slices.push(&mut self.head_w);
        slices.push(&mut self.head_b);
        slices
    }
}

impl ToyModelGrads {
    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut slices: Vec<&[f64]> = vec![&self.embed_w, &self.embed_b];
        slices.extend(self.block.slices());
        slices.push(&self.head_w);
        slices.push(&self.head_b);
        slices
    }
}

/// Run `steps` Adam updates; returns the loss breakdown measured before each
/// update. Deterministic given the model's initial state and inputs.
pub fn train_steps(
    model: &mut ToyModel,
    inputs: &TrainInputs,
    steps: usize,
    learning_rate: f64,
) -> Result<Vec<LossBreakdown>> {
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let shapes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut m: Vec<Vec<f64>> = shapes.iter().map(|&l| vec![0.0; l]).collect();
    let mut v: Vec<Vec<f64>> = shapes.iter().map(|&l| vec![0.0; l]).collect();
    let mut history = Vec::with_capacity(steps);

    for step in 1..=steps {
        let (loss, grads) = model.forward_backward(inputs)?;
        history.push(loss);
        let grad_slices = grads.slices();
        let bias1 = 1.0 - beta1.powi(step as i32);
        let bias2 = 1.0 - beta2.powi(step as i32);
        for (slice_idx, params) in model.param_slices_mut().into_iter().enumerate() {
            let g = grad_slices[slice_idx];
            let m_s = &mut m[slice_idx];
            let v_s = &mut v[slice_idx];
            for i in 0..params.len() {
                m_s[i] = beta1 * m_s[i] + (1.0 - beta1) * g[i];
                v_s[i] = beta2 * v_s[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m_s[i] / bias1;
                let v_hat = v_s[i] / bias2;
                params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(history)
}
