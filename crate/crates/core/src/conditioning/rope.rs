//! 3D rotary positional embeddings with a temporal offset for source tokens.
//!
//! The head dimension is split across the three axes; each axis rotates its
//! channel pairs by `pos * base^(-2i/d_axis)`. Rotations are norm-preserving
//! and purely relative: `<R(p) q, R(r) k>` depends only on `p - r`, which is
//! what lets a large constant temporal offset separate the source segment
//! from the target segment.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeConfig {
    pub head_dim: usize,
    /// Channel split (d_t, d_h, d_w); each even, summing to `head_dim`.
    pub axis_split: (usize, usize, usize),
    /// Temporal index shift applied to source tokens.
    pub rope_offset: usize,
    pub base_frequency: f64,
}

impl RopeConfig {
    /// Default split: half the channels to time, a quarter to each spatial
    /// axis, rounded down to even.
    pub fn for_head_dim(head_dim: usize) -> Result<Self> {
        if head_dim % 2 != 0 || head_dim == 0 {
            return Err(Error::Config(format!(
                "head_dim must be positive and even, got {}",
                head_dim
            )));
        }
        let quarter = (head_dim / 4) & !1;
        let d_h = quarter.max(2).min(head_dim.saturating_sub(4));
        let d_w = d_h;
        let d_t = head_dim - d_h - d_w;
        let cfg = Self {
            head_dim,
            axis_split: (d_t, d_h, d_w),
            rope_offset: 50,
            base_frequency: 10_000.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (d_t, d_h, d_w) = self.axis_split;
        if d_t + d_h + d_w != self.head_dim {
            return Err(Error::Config(format!(
                "axis split {:?} does not sum to head_dim {}",
                self.axis_split, self.head_dim
            )));
        }
        for (name, d) in [("d_t", d_t), ("d_h", d_h), ("d_w", d_w)] {
            if d % 2 != 0 {
                return Err(Error::Config(format!("{} = {} must be even", name, d)));
            }
        }
        if !(self.base_frequency > 1.0) {
            return Err(Error::Config(format!(
                "base_frequency must exceed 1, got {}",
                self.base_frequency
            )));
        }
        Ok(())
    }

    /// Rotation angles for one position, aligned with channel pairs
    /// (t-block pairs first, then h, then w).
    pub(crate) fn angles(&self, position: [i64; 3]) -> Vec<f64> {
        let (d_t, d_h, d_w) = self.axis_split;
        let mut out = Vec::with_capacity(self.head_dim / 2);
        for (axis_dim, pos) in [(d_t, position[0]), (d_h, position[1]), (d_w, position[2])] {
            for i in 0..axis_dim / 2 {
                let freq = self
                    .base_frequency
                    .powf(-2.0 * i as f64 / axis_dim as f64);
                out.push(pos as f64 * freq);
            }
        }
        out
    }
}

/// Rotate one head vector in place. `invert` applies the transpose rotation
/// (used by the backward pass).
pub(crate) fn rotate_head_f64(vec: &mut [f64], angles: &[f64], invert: bool) {
    debug_assert_eq!(vec.len(), angles.len() * 2);
    for (pair, &angle) in angles.iter().enumerate() {
        let (sin, cos) = if invert {
            ((-angle).sin(), (-angle).cos())
        } else {
            (angle.sin(), angle.cos())
        };
        let a = vec[2 * pair];
        let b = vec[2 * pair + 1];
        vec[2 * pair] = a * cos - b * sin;
        vec[2 * pair + 1] = a * sin + b * cos;
    }
}

/// Apply 3D RoPE to a `[N, heads, head_dim]` tensor of queries or keys.
pub fn rope_rotate(
    q_or_k: &Tensor,
    positions: &[[i64; 3]],
    cfg: &RopeConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let shape = q_or_k.shape();
    if shape.len() != 3 || shape[2] != cfg.head_dim {
        return Err(Error::Size(format!(
            "expected [N, heads, {}], got {:?}",
            cfg.head_dim, shape
        )));
    }
    if positions.len() != shape[0] {
        return Err(Error::Size(format!(
            "{} positions for {} tokens",
            positions.len(),
            shape[0]
        )));
    }
    let (n, heads, head_dim) = (shape[0], shape[1], shape[2]);
    let mut out = q_or_k.clone();
    for token in 0..n {
        let angles = cfg.angles(positions[token]);
        for h in 0..heads {
            let base = (token * heads + h) * head_dim;
            let mut buf: Vec<f64> = out.data()[base..base + head_dim]
                .iter()
                .map(|&v| v as f64)
                .collect();
            rotate_head_f64(&mut buf, &angles, false);
            for (i, v) in buf.into_iter().enumerate() {
                out.data_mut()[base + i] = v as f32;
            }
        }
    }
    Ok(out)
}
