//! Smooth random-walk crop trajectories.
//!
//! A trajectory is sampled as a handful of random control points inside the
//! admissible offset region, fitted with a natural cubic spline per axis,
//! then evaluated at frame times and rounded to integer pixel offsets. Crops
//! are pure pixel copies: the extracted clips stay pixel-identical to the
//! parent video.

use std::path::Path;

use crate::clip::VideoClip;
use crate::error::{Error, Result};
use crate::io;
use crate::rng::SeededRng;
use crate::spline::NaturalSpline1D;
use crate::tensor::Tensor;

/// Control points per second of clip duration.
pub const DEFAULT_CONTROL_POINT_RATE: f64 = 1.5;

/// A crop-window position at a normalized time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    /// Normalized time in [0, 1].
    pub t: f64,
    /// Crop window top-left, pixels.
    pub x: f64,
    pub y: f64,
}

/// Natural cubic spline through control points, one curve per axis.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: NaturalSpline1D,
    y: NaturalSpline1D,
}

impl CubicSpline {
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.x.eval(t)?, self.y.eval(t)?))
    }

    pub fn x_curve(&self) -> &NaturalSpline1D {
        &self.x
    }

    pub fn y_curve(&self) -> &NaturalSpline1D {
        &self.y
    }
}

/// Per-frame integer crop offsets plus the geometry they were sampled for.
#[derive(Debug, Clone, PartialEq)]
pub struct CropTrajectory {
    /// Top-left (x, y) per frame.
    pub offsets: Vec<(i64, i64)>,
    /// Crop window (w, h).
    pub crop_size: (usize, usize),
    /// Parent frame (W, H).
    pub source_size: (usize, usize),
}

impl CropTrajectory {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Check every offset keeps the window inside the parent frame.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.crop_size;
        let (full_w, full_h) = self.source_size;
        if w > full_w || h > full_h {
            return Err(Error::Size(format!(
                "crop {}x{} exceeds frame {}x{}",
                w, h, full_w, full_h
            )));
        }
        for (i, &(x, y)) in self.offsets.iter().enumerate() {
            if x < 0 || y < 0 || x as usize + w > full_w || y as usize + h > full_h {
                return Err(Error::Bounds(format!(
                    "offset ({}, {}) at frame {} leaves the window outside {}x{}",
                    x, y, i, full_w, full_h
                )));
            }
        }
        Ok(())
    }
}

/// Geometry bundle for trajectory sampling.
#[derive(Debug, Clone, Copy)]
pub struct CropBounds {
    pub frame_w: usize,
    pub frame_h: usize,
    pub crop_w: usize,
    pub crop_h: usize,
}

impl CropBounds {
    fn check(&self) -> Result<()> {
        if self.crop_w == 0 || self.crop_h == 0 {
            return Err(Error::Size("crop size must be nonzero".into()));
        }
        if self.crop_w > self.frame_w || self.crop_h > self.frame_h {
            return Err(Error::Size(format!(
                "crop {}x{} larger than frame {}x{}",
                self.crop_w, self.crop_h, self.frame_w, self.frame_h
            )));
        }
        Ok(())
    }

    fn max_offset(&self) -> (f64, f64) {
        (
            (self.frame_w - self.crop_w) as f64,
            (self.frame_h - self.crop_h) as f64,
        )
    }
}

/// Sample random-walk control points for one trajectory.
///
/// `N = max(2, round(duration_s * rate))` points at uniformly spaced times
/// covering [0, 1]. The walk starts at a uniform position in the admissible
/// region; each consecutive per-axis displacement is bounded by
/// `scale * min(W - w, H - h)` and positions are clamped in-bounds.
pub fn sample_control_points(
    rng: &mut SeededRng,
    duration_s: f64,
    bounds: CropBounds,
    scale: f64,
) -> Result<Vec<ControlPoint>> {
    bounds.check()?;
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::Config(format!("scale must be in [0, 1], got {}", scale)));
    }
    let n = ((duration_s * DEFAULT_CONTROL_POINT_RATE).round() as usize).max(2);
    sample_control_points_with_count(rng, n, bounds, scale)
}

/// Same as [`sample_control_points`] with an explicit point count.
pub fn sample_control_points_with_count(
    rng: &mut SeededRng,
    n: usize,
    bounds: CropBounds,
    scale: f64,
) -> Result<Vec<ControlPoint>> {
    bounds.check()?;
    let (max_x, max_y) = bounds.max_offset();
    let step_bound = scale
        * ((bounds.frame_w - bounds.crop_w).min(bounds.frame_h - bounds.crop_h)) as f64;

    let mut x = rng.next_f64() * max_x;
    let mut y = rng.next_f64() * max_y;

    let n = n.max(2);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            x = (x + rng.range_f64(-step_bound, step_bound)).clamp(0.0, max_x);
            y = (y + rng.range_f64(-step_bound, step_bound)).clamp(0.0, max_y);
        }
        points.push(ControlPoint {
            t: i as f64 / (n - 1) as f64,
            x,
            y,
        });
    }
    Ok(points)
}

/// Fit a natural cubic spline through control points (one curve per axis).
pub fn fit_natural_cubic_spline(points: &[ControlPoint]) -> Result<CubicSpline> {
    if points.len() < 2 {
        return Err(Error::InvalidKnots("need at least two control points".into()));
    }
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    Ok(CubicSpline {
        x: NaturalSpline1D::fit(&ts, &xs)?,
        y: NaturalSpline1D::fit(&ts, &ys)?,
    })
}

/// Evaluate the trajectory spline at a normalized time.
pub fn eval_spline(spline: &CubicSpline, t: f64) -> Result<(f64, f64)> {
    spline.eval(t)
}

/// Dimensions of the video a trajectory is generated for.
#[derive(Debug, Clone, Copy)]
pub struct VideoDims {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f32,
}

/// Generate a full per-frame crop trajectory.
///
/// Control points are sampled from `rng`, splined, evaluated at the
/// normalized frame times, rounded to the nearest integer pixel, and clamped
/// in-bounds. Deterministic in `rng`.
pub fn generate_crop_trajectory(
    video: VideoDims,
    crop: (usize, usize),
    scale: f64,
    rng: &mut SeededRng,
) -> Result<CropTrajectory> {
    if video.frames == 0 {
        return Err(Error::EmptyInput("video has no frames".into()));
    }
    let bounds = CropBounds {
        frame_w: video.width,
        frame_h: video.height,
        crop_w: crop.0,
        crop_h: crop.1,
    };
    let duration = video.frames as f64 / video.fps as f64;
    let points = sample_control_points(rng, duration, bounds, scale)?;
    let spline = fit_natural_cubic_spline(&points)?;

    let (max_x, max_y) = bounds.max_offset();
    let mut offsets = Vec::with_capacity(video.frames);
    for i in 0..video.frames {
        let t = if video.frames == 1 {
            0.0
        } else {
            i as f64 / (video.frames - 1) as f64
        };
        let (x, y) = spline.eval(t)?;
        offsets.push((
            (x.round().clamp(0.0, max_x)) as i64,
            (y.round().clamp(0.0, max_y)) as i64,
        ));
    }
    let traj = CropTrajectory {
        offsets,
        crop_size: crop,
        source_size: (video.width, video.height),
    };
    traj.validate()?;
    Ok(traj)
}

/// Extract the crop clip along a trajectory: frame `t` is the `(w, h)` window
/// of the parent frame `t` at `offsets[t]`. Pure copy, no resampling.
pub fn extract_crop_clip(video: &VideoClip, traj: &CropTrajectory) -> Result<VideoClip> {
    if traj.len() != video.num_frames() {
        return Err(Error::Bounds(format!(
            "trajectory length {} does not match clip length {}",
            traj.len(),
            video.num_frames()
        )));
    }
    if traj.source_size != (video.width(), video.height()) {
        return Err(Error::Bounds(format!(
            "trajectory was generated for {:?}, clip is {}x{}",
            traj.source_size,
            video.width(),
            video.height()
        )));
    }
    traj.validate().map_err(|e| match e {
        Error::Size(m) => Error::Bounds(m),
        other => other,
    })?;

    let (w, h) = traj.crop_size;
    let frames = video.frames();
    let mut out = Tensor::zeros(&[traj.len(), h, w, 3]);
    for (t, &(ox, oy)) in traj.offsets.iter().enumerate() {
        for row in 0..h {
            for col in 0..w {
                for c in 0..3 {
                    let v = frames.at(&[t, oy as usize + row, ox as usize + col, c]);
                    out.set(&[t, row, col, c], v);
                }
            }
        }
    }
    VideoClip::new(out, video.fps())
}

/// Serialize a trajectory: a `[T, 2]` VTNSR tensor of offsets next to a
/// sidecar text file with the geometry.
pub fn save_trajectory(traj: &CropTrajectory, path: &Path, seed: u64) -> Result<()> {
    let mut data = Vec::with_capacity(traj.len() * 2);
    for &(x, y) in &traj.offsets {
        data.push(x as f32);
        data.push(y as f32);
    }
    io::write_tensor(&Tensor::from_vec(&[traj.len(), 2], data)?, path)?;
    let meta = format!(
        "crop_size = {} {}\nsource_size = {} {}\nseed = {}\n",
        traj.crop_size.0, traj.crop_size.1, traj.source_size.0, traj.source_size.1, seed
    );
    let meta_path = path.with_extension("meta.txt");
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path, e))
}

pub fn load_trajectory(path: &Path) -> Result<CropTrajectory> {
    let offsets_tensor = io::read_tensor(path)?;
    if offsets_tensor.rank() != 2 || offsets_tensor.shape()[1] != 2 {
        return Err(Error::Format(format!(
            "trajectory tensor must be [T, 2], got {:?}",
            offsets_tensor.shape()
        )));
    }
    let meta_path = path.with_extension("meta.txt");
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut crop_size = None;
    let mut source_size = None;
    for line in meta.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let nums: Vec<usize> = value
            .split_whitespace()
            .filter_map(|v| v.parse().ok())
            .collect();
        match key.trim() {
            "crop_size" if nums.len() == 2 => crop_size = Some((nums[0], nums[1])),
            "source_size" if nums.len() == 2 => source_size = Some((nums[0], nums[1])),
            _ => {}
        }
    }
    let (crop_size, source_size) = match (crop_size, source_size) {
        (Some(c), Some(s)) => (c, s),
        _ => {
            return Err(Error::Format(format!(
                "{} is missing crop_size/source_size",
                meta_path.display()
            )))
        }
    };
    let offsets = offsets_tensor
        .data()
        .chunks_exact(2)
        .map(|p| (p[0] as i64, p[1] as i64))
        .collect();
    let traj = CropTrajectory {
        offsets,
        crop_size,
        source_size,
    };
    traj.validate()?;
    Ok(traj)
}
