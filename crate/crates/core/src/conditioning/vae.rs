//! Mock causal video encoder/decoder.
//!
//! A stand-in for a pre-trained causal 3D VAE that preserves the frame
//! arithmetic the conditioning math depends on: pixel frame 0 maps to latent
//! frame 0, every following group of `temporal_factor` frames maps to one
//! latent frame, so `T_L = (T - 1) / temporal_factor + 1`. Encoding
//! average-pools space and the causal window, then projects 3 -> C_L
//! channels with a fixed seeded matrix with orthonormal columns. Decoding is
//! nearest-neighbor upsampling plus the transpose projection (the
//! pseudo-inverse), so block-constant clips round-trip exactly.

use crate::clip::VideoClip;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// How pixel channels map to latent channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelProjection {
    /// Keep RGB as-is; requires `latent_channels == 3`.
    Identity,
    /// Seeded random matrix with orthonormal columns (Gram-Schmidt).
    SeededOrthogonal(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockVaeConfig {
    pub latent_channels: usize,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    pub projection: ChannelProjection,
}

impl Default for MockVaeConfig {
    fn default() -> Self {
        Self {
            latent_channels: 16,
            spatial_factor: 8,
            temporal_factor: 4,
            projection: ChannelProjection::SeededOrthogonal(0),
        }
    }
}

/// Latent video `[C_L, T_L, H_L, W_L]` plus the factors that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClip {
    pub z: Tensor,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
}

impl LatentClip {
    pub fn channels(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn latent_frames(&self) -> usize {
        self.z.shape()[1]
    }

    pub fn latent_height(&self) -> usize {
        self.z.shape()[2]
    }

    pub fn latent_width(&self) -> usize {
        self.z.shape()[3]
    }
}

/// Deterministic linear encoder/decoder pair.
#[derive(Debug, Clone)]
pub struct MockVae {
    cfg: MockVaeConfig,
    /// `[C_L x 3]`, orthonormal columns.
    projection: Vec<f64>,
}

impl MockVae {
    pub fn new(cfg: MockVaeConfig) -> Result<Self> {
        if cfg.spatial_factor == 0 || cfg.temporal_factor == 0 {
            return Err(Error::Config("pooling factors must be nonzero".into()));
        }
        let c = cfg.latent_channels;
        let projection = match cfg.projection {
            ChannelProjection::Identity => {
                if c != 3 {
                    return Err(Error::Config(format!(
                        "identity projection needs 3 latent channels, got {}",
                        c
                    )));
                }
                let mut m = vec![0.0; 9];
                for i in 0..3 {
                    m[i * 3 + i] = 1.0;
                }
                m
            }
            ChannelProjection::SeededOrthogonal(seed) => {
                if c < 3 {
                    return Err(Error::Config(format!(
                        "orthogonal extension needs at least 3 latent channels, got {}",
                        c
                    )));
                }
                orthonormal_columns(c, seed)
            }
        };
        Ok(Self { cfg, projection })
    }

    pub fn config(&self) -> &MockVaeConfig {
        &self.cfg
    }

    fn check_divisibility(&self, t: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        let (sf, tf) = (self.cfg.spatial_factor, self.cfg.temporal_factor);
        if (t - 1) % tf != 0 {
            return Err(Error::Size(format!(
                "clip length {} is not 1 mod temporal factor {}",
                t, tf
            )));
        }
        if h % sf != 0 || w % sf != 0 {
            return Err(Error::Size(format!(
                "frame {}x{} not divisible by spatial factor {}",
                w, h, sf
            )));
        }
        Ok(((t - 1) / tf + 1, h / sf, w / sf))
    }

    /// Pixel-frame window pooled into latent frame `k`: frame 0 alone for
    /// `k = 0`, else the `temporal_factor` frames ending at `k * tf`.
    fn window(&self, k: usize) -> std::ops::RangeInclusive<usize> {
        let tf = self.cfg.temporal_factor;
        if k == 0 {
            0..=0
        } else {
            (1 + (k - 1) * tf)..=(k * tf)
        }
    }

    pub fn encode(&self, clip: &VideoClip) -> Result<LatentClip> {
        let (t, h, w) = (clip.num_frames(), clip.height(), clip.width());
        let (t_l, h_l, w_l) = self.check_divisibility(t, h, w)?;
        let sf = self.cfg.spatial_factor;
        let c_l = self.cfg.latent_channels;
        let frames = clip.frames();

        let mut z = Tensor::zeros(&[c_l, t_l, h_l, w_l]);
        for k in 0..t_l {
            let window = self.window(k);
            let count = (window.end() - window.start() + 1) * sf * sf;
            for yl in 0..h_l {
                for xl in 0..w_l {
                    let mut pooled = [0.0f64; 3];
                    for ti in window.clone() {
                        for dy in 0..sf {
                            for dx in 0..sf {
                                for c in 0..3 {
                                    pooled[c] +=
                                        frames.at(&[ti, yl * sf + dy, xl * sf + dx, c]) as f64;
                                }
                            }
                        }
                    }
                    for p in &mut pooled {
                        *p /= count as f64;
                    }
                    for cl in 0..c_l {
                        let mut v = 0.0;
                        for c in 0..3 {
                            v += self.projection[cl * 3 + c] * pooled[c];
                        }
                        z.set(&[cl, k, yl, xl], v as f32);
                    }
                }
            }
        }
        Ok(LatentClip {
            z,
            spatial_factor: sf,
            temporal_factor: self.cfg.temporal_factor,
        })
    }

    pub fn decode(&self, latent: &LatentClip) -> Result<VideoClip> {
        if latent.spatial_factor != self.cfg.spatial_factor
            || latent.temporal_factor != self.cfg.temporal_factor
            || latent.channels() != self.cfg.latent_channels
        {
            return Err(Error::Config(format!(
                "latent ({} ch, factors {}/{}) does not match this encoder ({} ch, {}/{})",
                latent.channels(),
                latent.spatial_factor,
                latent.temporal_factor,
                self.cfg.latent_channels,
                self.cfg.spatial_factor,
                self.cfg.temporal_factor
            )));
        }
        let (sf, tf) = (self.cfg.spatial_factor, self.cfg.temporal_factor);
        let (t_l, h_l, w_l) = (
            latent.latent_frames(),
            latent.latent_height(),
            latent.latent_width(),
        );
        let t = (t_l - 1) * tf + 1;
        let (h, w) = (h_l * sf, w_l * sf);
        let c_l = self.cfg.latent_channels;

        let mut frames = Tensor::zeros(&[t, h, w, 3]);
        for ti in 0..t {
            let k = if ti == 0 { 0 } else { (ti - 1) / tf + 1 };
            for y in 0..h {
                for x in 0..w {
                    let (yl, xl) = (y / sf, x / sf);
                    for c in 0..3 {
                        let mut v = 0.0f64;
                        for cl in 0..c_l {
                            v += self.projection[cl * 3 + c] * latent.z.at(&[cl, k, yl, xl]) as f64;
                        }
                        frames.set(&[ti, y, x, c], v.clamp(0.0, 1.0) as f32);
                    }
                }
            }
        }
        VideoClip::new(frames, crate::clip::DEFAULT_FPS)
    }
}

/// `rows x 3` matrix with orthonormal columns via seeded Gram-Schmidt.
fn orthonormal_columns(rows: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed, 0x7a3e);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(3);
    while cols.len() < 3 {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.next_gaussian()).collect();
        for prev in &cols {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue; // essentially impossible, but regenerate if degenerate
        }
        for vi in &mut v {
            *vi /= norm;
        }
        cols.push(v);
    }
    let mut m = vec![0.0; rows * 3];
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            m[r * 3 + c] = v;
        }
    }
    m
}
