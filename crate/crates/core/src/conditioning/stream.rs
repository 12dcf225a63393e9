//! Conditioning stream assembly and patchification.
//!
//! The anchor stream stacks `[z_n | z_a | M_a]` along channels; the source
//! stream stacks `[z_s | z_s | 1]`. Both are patchified with one shared
//! linear embedding into a single token sequence, target tokens first, with
//! the configured temporal offset added to the source tokens' positions.

use crate::clip::BinaryMask;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::vae::LatentClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Anchor,
    Source,
}

/// Which half of the token sequence a token belongs to. The anchor stream
/// carries the noisy latent being denoised, so its tokens are the target
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Target,
    Source,
}

/// A `[2*C_L + C_M, T_L, H_L, W_L]` conditioning tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionStream {
    pub tensor: Tensor,
    pub kind: StreamKind,
    pub latent_channels: usize,
    pub mask_channels: usize,
}

impl ConditionStream {
    pub fn channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn latent_frames(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn latent_height(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn latent_width(&self) -> usize {
        self.tensor.shape()[3]
    }

    fn channel_block(&self, start: usize, count: usize) -> Tensor {
        let shape = self.tensor.shape();
        let (t, h, w) = (shape[1], shape[2], shape[3]);
        let stride = t * h * w;
        let data = self.tensor.data()[start * stride..(start + count) * stride].to_vec();
        Tensor::from_vec(&[count, t, h, w], data).expect("block shape")
    }

    /// Channels `[0, C_L)`: the noise latent (or duplicated source latent).
    pub fn noise_block(&self) -> Tensor {
        self.channel_block(0, self.latent_channels)
    }

    /// Channels `[C_L, 2*C_L)`: the reference latent.
    pub fn reference_block(&self) -> Tensor {
        self.channel_block(self.latent_channels, self.latent_channels)
    }

    /// Channels `[2*C_L, 2*C_L + C_M)`: the mask block.
    pub fn mask_block(&self) -> Tensor {
        self.channel_block(2 * self.latent_channels, self.mask_channels)
    }
}

/// Nearest-neighbor downsample of a pixel-space mask to the latent grid.
///
/// Temporal mapping is causal (latent 0 samples pixel frame 0, latent k
/// samples the last frame of its window, `k * tf`); spatially each latent
/// cell samples the top-left pixel of its block. Values stay in {0, 1}.
pub fn downsample_mask(
    mask: &BinaryMask,
    spatial_factor: usize,
    temporal_factor: usize,
) -> Result<Tensor> {
    let (t, h, w) = (mask.num_frames(), mask.height(), mask.width());
    if (t - 1) % temporal_factor != 0 || h % spatial_factor != 0 || w % spatial_factor != 0 {
        return Err(Error::Size(format!(
            "mask [{}, {}, {}] not divisible by factors ({}, {})",
            t, h, w, spatial_factor, temporal_factor
        )));
    }
    let t_l = (t - 1) / temporal_factor + 1;
    let (h_l, w_l) = (h / spatial_factor, w / spatial_factor);
    let mut out = Tensor::zeros(&[t_l, h_l, w_l]);
    for k in 0..t_l {
        let src_t = if k == 0 { 0 } else { k * temporal_factor };
        for y in 0..h_l {
            for x in 0..w_l {
                let v = mask
                    .values()
                    .at(&[src_t, y * spatial_factor, x * spatial_factor, 0]);
                out.set(&[k, y, x], v);
            }
        }
    }
    Ok(out)
}

fn stack_channels(blocks: &[&Tensor], dims: (usize, usize, usize)) -> Tensor {
    let (t, h, w) = dims;
    let mut data = Vec::new();
    for b in blocks {
        data.extend_from_slice(b.data());
    }
    let channels: usize = blocks.iter().map(|b| b.shape()[0]).sum();
    Tensor::from_vec(&[channels, t, h, w], data).expect("stacked shape")
}

/// Assemble the anchor conditioning stream `[z_n | z_a | M_a]`.
///
/// `m_a` is the pixel-space anchor mask; it is downsampled to the latent
/// grid and replicated across `mask_channels` channels.
pub fn assemble_anchor_stream(
    z_a: &LatentClip,
    z_n: &LatentClip,
    m_a: &BinaryMask,
    mask_channels: usize,
) -> Result<ConditionStream> {
    if z_a.z.shape() != z_n.z.shape() {
        return Err(Error::Size(format!(
            "anchor latent {:?} and noise latent {:?} disagree",
            z_a.z.shape(),
            z_n.z.shape()
        )));
    }
    let (c_l, t_l, h_l, w_l) = (
        z_a.channels(),
        z_a.latent_frames(),
        z_a.latent_height(),
        z_a.latent_width(),
    );
    let small = downsample_mask(m_a, z_a.spatial_factor, z_a.temporal_factor)?;
    if small.shape() != [t_l, h_l, w_l] {
        return Err(Error::Size(format!(
            "downsampled mask {:?} does not match latent grid [{}, {}, {}]",
            small.shape(),
            t_l,
            h_l,
            w_l
        )));
    }
    let mut mask_block = Tensor::zeros(&[mask_channels, t_l, h_l, w_l]);
    for c in 0..mask_channels {
        let stride = t_l * h_l * w_l;
        mask_block.data_mut()[c * stride..(c + 1) * stride].copy_from_slice(small.data());
    }
    let tensor = stack_channels(&[&z_n.z, &z_a.z, &mask_block], (t_l, h_l, w_l));
    Ok(ConditionStream {
        tensor,
        kind: StreamKind::Anchor,
        latent_channels: c_l,
        mask_channels,
    })
}

/// Assemble the source conditioning stream `[z_s | z_s | 1]`.
pub fn assemble_source_stream(z_s: &LatentClip, mask_channels: usize) -> Result<ConditionStream> {
    let (c_l, t_l, h_l, w_l) = (
        z_s.channels(),
        z_s.latent_frames(),
        z_s.latent_height(),
        z_s.latent_width(),
    );
    let ones = Tensor::full(&[mask_channels, t_l, h_l, w_l], 1.0);
    let tensor = stack_channels(&[&z_s.z, &z_s.z, &ones], (t_l, h_l, w_l));
    Ok(ConditionStream {
        tensor,
        kind: StreamKind::Source,
        latent_channels: c_l,
        mask_channels,
    })
}

/// Patchified token sequence: target tokens first, then source tokens with
/// their temporal positions shifted by the rope offset.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    /// `[N, D]` token features.
    pub tokens: Tensor,
    /// Per-token (t, h, w) grid position.
    pub positions: Vec<[i64; 3]>,
    pub segments: Vec<Segment>,
}

impl TokenGrid {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[1]
    }
}

/// Shared linear patch embedding (the patchify block both streams go
/// through).
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub patch: (usize, usize, usize),
    pub in_channels: usize,
    pub dim: usize,
    pub(crate) weight: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl PatchEmbed {
    pub fn new(
        in_channels: usize,
        patch: (usize, usize, usize),
        dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if patch.0 == 0 || patch.1 == 0 || patch.2 == 0 {
            return Err(Error::Config("patch dims must be nonzero".into()));
        }
        let fan_in = in_channels * patch.0 * patch.1 * patch.2;
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weight = (0..dim * fan_in)
            .map(|_| rng.next_gaussian() * scale)
            .collect();
        let bias = vec![0.0; dim];
        Ok(Self {
            patch,
            in_channels,
            dim,
            weight,
            bias,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.patch.0 * self.patch.1 * self.patch.2
    }

    /// Flatten a stream into per-patch vectors (channel-major within each
    /// patch) and their grid positions, t-major then h then w.
    pub(crate) fn patch_vectors(
        &self,
        stream: &ConditionStream,
    ) -> Result<(Vec<Vec<f64>>, Vec<[i64; 3]>)> {
        let (p_t, p_h, p_w) = self.patch;
        let shape = stream.tensor.shape();
        let (c, t, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if c != self.in_channels {
            return Err(Error::Size(format!(
                "stream has {} channels, embedding expects {}",
                c, self.in_channels
            )));
        }
        if t % p_t != 0 || h % p_h != 0 || w % p_w != 0 {
            return Err(Error::Size(format!(
                "grid [{}, {}, {}] not divisible by patch {:?}",
                t, h, w, self.patch
            )));
        }
        let (gt, gh, gw) = (t / p_t, h / p_h, w / p_w);
        let mut vectors = Vec::with_capacity(gt * gh * gw);
        let mut positions = Vec::with_capacity(gt * gh * gw);
        for ti in 0..gt {
            for yi in 0..gh {
                for xi in 0..gw {
                    let mut v = Vec::with_capacity(self.fan_in());
                    for ci in 0..c {
                        for dt in 0..p_t {
                            for dy in 0..p_h {
                                for dx in 0..p_w {
                                    v.push(stream.tensor.at(&[
                                        ci,
                                        ti * p_t + dt,
                                        yi * p_h + dy,
                                        xi * p_w + dx,
                                    ]) as f64);
                                }
                            }
                        }
                    }
                    vectors.push(v);
                    positions.push([ti as i64, yi as i64, xi as i64]);
                }
            }
        }
        Ok((vectors, positions))
    }

    pub(crate) fn embed_f64(&self, patch_vec: &[f64]) -> Vec<f64> {
        let fan_in = self.fan_in();
        debug_assert_eq!(patch_vec.len(), fan_in);
        (0..self.dim)
            .map(|o| {
                let row = &self.weight[o * fan_in..(o + 1) * fan_in];
                row.iter().zip(patch_vec).map(|(w, x)| w * x).sum::<f64>() + self.bias[o]
            })
            .collect()
    }

    /// Patchify both streams into one token sequence. Target (anchor-stream)
    /// tokens come first with unchanged positions; source tokens follow with
    /// `rope_offset` added to their temporal index.
    pub fn concat_streams(
        &self,
        anchor: &ConditionStream,
        source: &ConditionStream,
        rope_offset: usize,
    ) -> Result<TokenGrid> {
        if anchor.kind != StreamKind::Anchor || source.kind != StreamKind::Source {
            return Err(Error::Config(
                "concat_streams expects (anchor, source) in that order".into(),
            ));
        }
        if anchor.tensor.shape() != source.tensor.shape() {
            return Err(Error::Size(format!(
                "stream shapes disagree: {:?} vs {:?}",
                anchor.tensor.shape(),
                source.tensor.shape()
            )));
        }
        if rope_offset <= anchor.latent_frames() {
            return Err(Error::Config(format!(
                "rope offset {} must exceed the latent frame count {}",
                rope_offset,
                anchor.latent_frames()
            )));
        }
        let (a_vecs, a_pos) = self.patch_vectors(anchor)?;
        let (s_vecs, s_pos) = self.patch_vectors(source)?;

        let n = a_vecs.len() + s_vecs.len();
        let mut tokens = Tensor::zeros(&[n, self.dim]);
        let mut positions = Vec::with_capacity(n);
        let mut segments = Vec::with_capacity(n);
        for (i, (vec, pos)) in a_vecs.iter().zip(&a_pos).enumerate() {
            let e = self.embed_f64(vec);
            for (d, v) in e.into_iter().enumerate() {
                tokens.set(&[i, d], v as f32);
            }
            positions.push(*pos);
            segments.push(Segment::Target);
        }
        for (i, (vec, pos)) in s_vecs.iter().zip(&s_pos).enumerate() {
            let e = self.embed_f64(vec);
            for (d, v) in e.into_iter().enumerate() {
                tokens.set(&[a_vecs.len() + i, d], v as f32);
            }
            positions.push([pos[0] + rope_offset as i64, pos[1], pos[2]]);
            segments.push(Segment::Source);
        }
        Ok(TokenGrid {
            tokens,
            positions,
            segments,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::vae::LatentClip;

    fn latent(c: usize, t: usize, h: usize, w: usize, fill: impl Fn(usize) -> f32) -> LatentClip {
        let mut z = Tensor::zeros(&[c, t, h, w]);
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v = fill(i);
        }
        LatentClip {
            z,
            spatial_factor: 1,
            temporal_factor: 1,
        }
    }

    fn ones_mask(t: usize, h: usize, w: usize) -> BinaryMask {
        BinaryMask::all_ones(t, h, w)
    }

    #[test]
    fn anchor_stream_channel_count_and_layout() {
        let z_a = latent(4, 2, 2, 2, |i| i as f32 * 0.01);
        let z_n = latent(4, 2, 2, 2, |i| 1.0 - i as f32 * 0.01);
        let mask = ones_mask(2, 2, 2);
        let stream = assemble_anchor_stream(&z_a, &z_n, &mask, 2).unwrap();
        assert_eq!(stream.channels(), 10); // 2 * 4 + 2
        assert_eq!(stream.noise_block(), z_n.z);
        assert_eq!(stream.reference_block(), z_a.z);
        assert!(stream.mask_block().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn source_stream_duplicates_and_uses_all_ones_mask() {
        let z_s = latent(4, 2, 2, 2, |i| (i % 7) as f32 * 0.1);
        let stream = assemble_source_stream(&z_s, 3).unwrap();
        assert_eq!(stream.channels(), 11);
        assert_eq!(stream.noise_block(), z_s.z);
        assert_eq!(stream.reference_block(), z_s.z);
        assert!(stream.mask_block().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_downsample_is_causal_nearest() {
        // 5 pixel frames, tf = 2 -> 3 latent frames sampling frames 0, 2, 4.
        let mut values = Tensor::zeros(&[5, 2, 2, 1]);
        for t in [0usize, 2, 4] {
            values.set(&[t, 0, 0, 0], 1.0);
        }
        let mask = BinaryMask::new(values).unwrap();
        let small = downsample_mask(&mask, 2, 2).unwrap();
        assert_eq!(small.shape(), &[3, 1, 1]);
        assert!(small.data().iter().all(|&v| v == 1.0));
    }

    fn toy_streams() -> (ConditionStream, ConditionStream) {
        let z_a = latent(2, 2, 2, 2, |i| i as f32 * 0.05);
        let z_n = latent(2, 2, 2, 2, |i| 0.3 + i as f32 * 0.01);
        let z_s = latent(2, 2, 2, 2, |i| 0.9 - i as f32 * 0.02);
        let anchor = assemble_anchor_stream(&z_a, &z_n, &ones_mask(2, 2, 2), 2).unwrap();
        let source = assemble_source_stream(&z_s, 2).unwrap();
        (anchor, source)
    }

    #[test]
    fn concat_counts_tokens_and_applies_the_offset() {
        let (anchor, source) = toy_streams();
        let mut rng = SeededRng::new(1, 0);
        let embed = PatchEmbed::new(6, (1, 1, 1), 8, &mut rng).unwrap();
        let grid = embed.concat_streams(&anchor, &source, 50).unwrap();
        assert_eq!(grid.len(), 16); // 2 * (2*2*2)
        let targets = grid
            .segments
            .iter()
            .filter(|s| **s == Segment::Target)
            .count();
        assert_eq!(targets, 8);
        // Target positions unchanged; source temporal indices shifted by 50.
        for (pos, seg) in grid.positions.iter().zip(&grid.segments) {
            match seg {
                Segment::Target => assert!(pos[0] == 0 || pos[0] == 1),
                Segment::Source => assert!(pos[0] == 50 || pos[0] == 51),
            }
        }
        // First source token at latent t = 0 carries position 50.
        let first_source = grid
            .segments
            .iter()
            .position(|s| *s == Segment::Source)
            .unwrap();
        assert_eq!(grid.positions[first_source], [50, 0, 0]);
    }

    #[test]
    fn offset_must_clear_the_latent_frame_count() {
        let (anchor, source) = toy_streams();
        let mut rng = SeededRng::new(1, 0);
        let embed = PatchEmbed::new(6, (1, 1, 1), 8, &mut rng).unwrap();
        assert!(matches!(
            embed.concat_streams(&anchor, &source, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_divisible_patch_is_a_size_error() {
        let (anchor, source) = toy_streams();
        let mut rng = SeededRng::new(1, 0);
        let embed = PatchEmbed::new(6, (1, 3, 1), 8, &mut rng).unwrap();
        assert!(matches!(
            embed.concat_streams(&anchor, &source, 50),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn channel_blocks_roundtrip_the_inputs() {
        let z_a = latent(3, 2, 2, 2, |i| (i % 13) as f32 * 0.07);
        let z_n = latent(3, 2, 2, 2, |i| (i % 5) as f32 * 0.11);
        let mut mask_vals = Tensor::zeros(&[2, 2, 2, 1]);
        for (i, v) in mask_vals.data_mut().iter_mut().enumerate() {
            *v = (i % 2) as f32;
        }
        let mask = BinaryMask::new(mask_vals).unwrap();
        let stream = assemble_anchor_stream(&z_a, &z_n, &mask, 2).unwrap();
        assert_eq!(stream.noise_block(), z_n.z);
        assert_eq!(stream.reference_block(), z_a.z);
        let small = downsample_mask(&mask, 1, 1).unwrap();
        let block = stream.mask_block();
        for c in 0..2 {
            for (i, &v) in small.data().iter().enumerate() {
                assert_eq!(block.data()[c * 8 + i], v);
            }
        }
    }
}
