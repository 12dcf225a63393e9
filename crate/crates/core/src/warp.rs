//! Flow-field composition and softmax-splatting forward warps.
//!
//! Forward warping scatters each source pixel to its flowed target location
//! with a bilinear kernel over the four nearest integer pixels. Collisions
//! are blended with normalized exponential importance weights; exponentials
//! are stabilized by subtracting the per-target maximum importance before
//! exponentiation. Accumulation runs in f64 in a fixed row-major order, so
//! results are deterministic and match a direct per-target evaluation to
//! well below 1e-5.

use crate::clip::BinaryMask;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trajectory::CropTrajectory;

/// How splat importance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportanceMode {
    /// Z = 0 everywhere (plain average splatting).
    Uniform,
    /// Z comes from a caller-provided per-pixel map.
    Map,
}

/// Softmax-splat configuration.
#[derive(Debug, Clone, Copy)]
pub struct SplatParams {
    pub importance_mode: ImportanceMode,
    /// Targets with accumulated weight at or below this are holes.
    pub weight_epsilon: f32,
    /// Weight cutoff for the validity mask, in (0, 1].
    pub validity_threshold: f32,
}

impl Default for SplatParams {
    fn default() -> Self {
        Self {
            importance_mode: ImportanceMode::Uniform,
            weight_epsilon: 1e-6,
            validity_threshold: 0.3,
        }
    }
}

impl SplatParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_epsilon > 0.0) {
            return Err(Error::Config(format!(
                "weight_epsilon must be positive, got {}",
                self.weight_epsilon
            )));
        }
        if !(self.validity_threshold > 0.0 && self.validity_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "validity_threshold must be in (0, 1], got {}",
                self.validity_threshold
            )));
        }
        Ok(())
    }
}

/// Dense per-pixel displacement field `[T, H, W, 2]` (dx, dy), mapping the
/// reference frame's coordinates to every frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    flow: Tensor,
    reference_index: usize,
}

impl FlowField {
    pub fn new(flow: Tensor, reference_index: usize) -> Result<Self> {
        let shape = flow.shape();
        if shape.len() != 4 || shape[3] != 2 {
            return Err(Error::Size(format!(
                "flow field must be [T, H, W, 2], got {:?}",
                shape
            )));
        }
        if reference_index >= shape[0] {
            return Err(Error::Bounds(format!(
                "reference index {} outside 0..{}",
                reference_index, shape[0]
            )));
        }
        if !flow.all_finite() {
            return Err(Error::InvalidFlow("flow field has non-finite values".into()));
        }
        Ok(Self {
            flow,
            reference_index,
        })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.flow
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn num_frames(&self) -> usize {
        self.flow.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.flow.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.flow.shape()[2]
    }

    #[inline]
    pub fn at(&self, t: usize, y: usize, x: usize) -> (f32, f32) {
        (
            self.flow.at(&[t, y, x, 0]),
            self.flow.at(&[t, y, x, 1]),
        )
    }
}

/// Combine a dense tracking field with crop-offset flow.
///
/// For pixel `p` in crop coordinates of the reference source window,
/// `F_comb(t)(p) = track_t(p + o_src) + o_src - o_tgt(t)`, where `track_t` is
/// the displacement stored in `tracks`. The result is cropped to
/// `[T, crop_h, crop_w, 2]`.
pub fn compose_offset_flow(
    tracks: &FlowField,
    src_offset_ref: (i64, i64),
    tgt_offsets: &CropTrajectory,
    crop: (usize, usize),
) -> Result<FlowField> {
    let (crop_w, crop_h) = crop;
    let frames = tracks.num_frames();
    if tgt_offsets.len() != frames {
        return Err(Error::Size(format!(
            "target trajectory has {} frames, tracks have {}",
            tgt_offsets.len(),
            frames
        )));
    }
    let (ox, oy) = src_offset_ref;
    if ox < 0
        || oy < 0
        || ox as usize + crop_w > tracks.width()
        || oy as usize + crop_h > tracks.height()
    {
        return Err(Error::Size(format!(
            "source window {}x{} at ({}, {}) exceeds track field {}x{}",
            crop_w,
            crop_h,
            ox,
            oy,
            tracks.width(),
            tracks.height()
        )));
    }

    let mut out = Tensor::zeros(&[frames, crop_h, crop_w, 2]);
    for t in 0..frames {
        let (tx, ty) = tgt_offsets.offsets[t];
        for y in 0..crop_h {
            for x in 0..crop_w {
                let (dx, dy) = tracks.at(t, oy as usize + y, ox as usize + x);
                out.set(&[t, y, x, 0], dx + (ox - tx) as f32);
                out.set(&[t, y, x, 1], dy + (oy - ty) as f32);
            }
        }
    }
    FlowField::new(out, tracks.reference_index())
}

/// One scatter contribution: a target position, an importance, and channel
/// values. Used by both the frame warp and the point-cloud renderer.
pub(crate) struct Contribution<'a> {
    pub x: f64,
    pub y: f64,
    pub importance: f32,
    pub values: &'a [f32],
}

/// Two-pass stabilized softmax scatter over an `h x w x channels` target.
///
/// `for_each` must yield the same contributions in the same order on both
/// invocations; iteration order fixes the (deterministic) reduction order.
pub(crate) fn splat_scatter<F>(
    h: usize,
    w: usize,
    channels: usize,
    weight_epsilon: f32,
    mut for_each: F,
) -> (Tensor, Tensor)
where
    F: FnMut(&mut dyn FnMut(Contribution)),
{
    let npix = h * w;
    let mut max_z = vec![f32::NEG_INFINITY; npix];

    let mut visit = |contrib: Contribution, body: &mut dyn FnMut(usize, f64, &Contribution)| {
        let x0 = contrib.x.floor();
        let y0 = contrib.y.floor();
        let fx = contrib.x - x0;
        let fy = contrib.y - y0;
        for (corner_x, corner_y, bw) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1.0, y0, fx * (1.0 - fy)),
            (x0, y0 + 1.0, (1.0 - fx) * fy),
            (x0 + 1.0, y0 + 1.0, fx * fy),
        ] {
            if bw <= 0.0 {
                continue;
            }
            if corner_x < 0.0 || corner_y < 0.0 || corner_x >= w as f64 || corner_y >= h as f64 {
                continue; // splatted outside bounds: dropped
            }
            let idx = corner_y as usize * w + corner_x as usize;
            body(idx, bw, &contrib);
        }
    };

    // Pass 1: per-target maximum importance among contributors.
    for_each(&mut |contrib| {
        visit(contrib, &mut |idx, _bw, c| {
            if c.importance > max_z[idx] {
                max_z[idx] = c.importance;
            }
        });
    });

    // Pass 2: stabilized accumulation in f64, fixed iteration order.
    let mut num = vec![0.0f64; npix * channels];
    let mut den = vec![0.0f64; npix];
    for_each(&mut |contrib| {
        visit(contrib, &mut |idx, bw, c| {
            let e = bw * ((c.importance - max_z[idx]) as f64).exp();
            den[idx] += e;
            for (ch, &v) in c.values.iter().enumerate() {
                num[idx * channels + ch] += e * v as f64;
            }
        });
    });

    let mut warped = Tensor::zeros(&[h, w, channels]);
    let mut weight = Tensor::zeros(&[h, w, 1]);
    let eps = weight_epsilon as f64;
    for idx in 0..npix {
        weight.data_mut()[idx] = den[idx] as f32;
        if den[idx] > eps {
            for ch in 0..channels {
                warped.data_mut()[idx * channels + ch] =
                    (num[idx * channels + ch] / den[idx]) as f32;
            }
        }
    }
    (warped, weight)
}

/// Forward-warp one frame by softmax splatting.
///
/// Returns the warped frame and the accumulated weight map. Weights are
/// stabilized per target (the strongest contributor counts as e^0), so with
/// uniform importance a fully covered pixel has weight 1.
pub fn softmax_splat(
    frame: &Tensor,
    flow: &Tensor,
    importance: Option<&Tensor>,
    params: &SplatParams,
) -> Result<(Tensor, Tensor)> {
    params.validate()?;
    let shape = frame.shape();
    if shape.len() != 3 {
        return Err(Error::Size(format!("frame must be [H, W, C], got {:?}", shape)));
    }
    let (h, w, channels) = (shape[0], shape[1], shape[2]);
    if flow.shape() != [h, w, 2] {
        return Err(Error::Size(format!(
            "flow must be [{}, {}, 2], got {:?}",
            h,
            w,
            flow.shape()
        )));
    }
    if !flow.all_finite() {
        return Err(Error::InvalidFlow("flow contains NaN or Inf".into()));
    }
    let z_map = match (params.importance_mode, importance) {
        (ImportanceMode::Uniform, None) => None,
        (ImportanceMode::Map, Some(z)) => {
            if z.shape() != [h, w, 1] {
                return Err(Error::Size(format!(
                    "importance must be [{}, {}, 1], got {:?}",
                    h,
                    w,
                    z.shape()
                )));
            }
            Some(z)
        }
        (ImportanceMode::Uniform, Some(_)) => {
            return Err(Error::Config(
                "importance map given but importance_mode is uniform".into(),
            ))
        }
        (ImportanceMode::Map, None) => {
            return Err(Error::Config(
                "importance_mode is map but no importance given".into(),
            ))
        }
    };

    let (warped, weight) = splat_scatter(h, w, channels, params.weight_epsilon, |emit| {
        for y in 0..h {
            for x in 0..w {
                let dx = flow.at(&[y, x, 0]) as f64;
                let dy = flow.at(&[y, x, 1]) as f64;
                let z = z_map.map(|m| m.at(&[y, x, 0])).unwrap_or(0.0);
                let base = (y * w + x) * channels;
                emit(Contribution {
                    x: x as f64 + dx,
                    y: y as f64 + dy,
                    importance: z,
                    values: &frame.data()[base..base + channels],
                });
            }
        }
    });
    Ok((warped, weight))
}

/// Threshold per-pixel splat weights into a binary validity mask.
pub fn validity_mask(weight: &Tensor, threshold: f32) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "validity threshold must be in (0, 1], got {}",
            threshold
        )));
    }
    let shape = weight.shape();
    if shape.len() != 4 || shape[3] != 1 {
        return Err(Error::Size(format!(
            "weight tensor must be [T, H, W, 1], got {:?}",
            shape
        )));
    }
    let data = weight
        .data()
        .iter()
        .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
        .collect();
    BinaryMask::new(Tensor::from_vec(shape, data)?)
}
