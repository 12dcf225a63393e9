//! Video clips and binary masks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frame rate assumed for image sequences, which carry no timing metadata.
pub const DEFAULT_FPS: f32 = 16.0;

/// A video clip: frames `[T, H, W, 3]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Tensor,
    fps: f32,
}

impl VideoClip {
    pub fn new(frames: Tensor, fps: f32) -> Result<Self> {
        let shape = frames.shape();
        if shape.len() != 4 || shape[3] != 3 {
            return Err(Error::Size(format!(
                "clip frames must be [T, H, W, 3], got {:?}",
                shape
            )));
        }
        if shape[0] == 0 {
            return Err(Error::EmptyInput("clip must have at least one frame".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", fps)));
        }
        if frames.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(
                "clip values must lie in [0, 1] and be finite".into(),
            ));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn duration_seconds(&self) -> f64 {
        self.num_frames() as f64 / self.fps as f64
    }

    /// Copy of frame `t` as an `[H, W, 3]` tensor.
    pub fn frame(&self, t: usize) -> Result<Tensor> {
        if t >= self.num_frames() {
            return Err(Error::Bounds(format!(
                "frame {} out of range 0..{}",
                t,
                self.num_frames()
            )));
        }
        let (h, w) = (self.height(), self.width());
        let stride = h * w * 3;
        let data = self.frames.data()[t * stride..(t + 1) * stride].to_vec();
        Tensor::from_vec(&[h, w, 3], data)
    }

    /// Stack per-frame `[H, W, 3]` tensors into a clip.
    pub fn from_frames(frames: &[Tensor], fps: f32) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("no frames to stack".into()));
        }
        let shape = frames[0].shape().to_vec();
        let mut data = Vec::with_capacity(frames.len() * frames[0].len());
        for f in frames {
            if f.shape() != shape.as_slice() {
                return Err(Error::Size(format!(
                    "frame shape {:?} does not match {:?}",
                    f.shape(),
                    shape
                )));
            }
            data.extend_from_slice(f.data());
        }
        let full = Tensor::from_vec(&[frames.len(), shape[0], shape[1], shape[2]], data)?;
        VideoClip::new(full, fps)
    }
}

/// A strictly two-valued mask `[T, H, W, 1]`, elements in `{0.0, 1.0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    values: Tensor,
}

impl BinaryMask {
    pub fn new(values: Tensor) -> Result<Self> {
        let shape = values.shape();
        if shape.len() != 4 || shape[3] != 1 {
            return Err(Error::Size(format!(
                "mask must be [T, H, W, 1], got {:?}",
                shape
            )));
        }
        if values.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain("mask values must be exactly 0.0 or 1.0".into()));
        }
        Ok(Self { values })
    }

    pub fn all_ones(t: usize, h: usize, w: usize) -> Self {
        Self {
            values: Tensor::full(&[t, h, w, 1], 1.0),
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    pub fn num_frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    /// Fraction of elements equal to 1.
    pub fn mean(&self) -> f64 {
        self.values.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_rejects_out_of_range_values() {
        let t = Tensor::full(&[1, 2, 2, 3], 1.5);
        assert!(VideoClip::new(t, 16.0).is_err());
        let t = Tensor::full(&[1, 2, 2, 3], 0.5);
        assert!(VideoClip::new(t, 16.0).is_ok());
    }

    #[test]
    fn clip_rejects_bad_shapes_and_fps() {
        assert!(VideoClip::new(Tensor::zeros(&[1, 2, 2, 4]), 16.0).is_err());
        assert!(VideoClip::new(Tensor::zeros(&[0, 2, 2, 3]), 16.0).is_err());
        assert!(VideoClip::new(Tensor::zeros(&[1, 2, 2, 3]), 0.0).is_err());
    }

    #[test]
    fn mask_must_be_two_valued() {
        assert!(BinaryMask::new(Tensor::full(&[1, 2, 2, 1], 0.5)).is_err());
        assert!(BinaryMask::new(Tensor::full(&[1, 2, 2, 1], 1.0)).is_ok());
    }

    #[test]
    fn frame_roundtrips_through_stack() {
        let mut t = Tensor::zeros(&[2, 2, 2, 3]);
        t.set(&[1, 0, 1, 2], 0.75);
        let clip = VideoClip::new(t, 8.0).unwrap();
        let frames: Vec<Tensor> = (0..2).map(|i| clip.frame(i).unwrap()).collect();
        let rebuilt = VideoClip::from_frames(&frames, 8.0).unwrap();
        assert_eq!(rebuilt, clip);
    }
}
