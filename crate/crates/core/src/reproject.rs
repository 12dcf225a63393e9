//! Inference-time anchor generation: unproject source frames into a colored
//! point cloud using depth and camera files, then re-render along a novel
//! camera trajectory.
//!
//! Conventions: pinhole camera looking down +z with x right and y down;
//! poses are camera-to-world with unit quaternions. Geometry runs in f64,
//! pixel data stays f32. Rendering reuses the softmax-splat scatter with
//! importance `-z / z_scale`, so nearer points dominate contested pixels.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::clip::{BinaryMask, VideoClip};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::spline::NaturalSpline1D;
use crate::tensor::Tensor;
use crate::warp::{splat_scatter, Contribution, SplatParams};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64)
            || !(0.0 <= self.cy && self.cy < self.height as f64)
        {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Project a camera-frame point to pixel coordinates (u right, v down).
    /// The caller guarantees `z > 0`.
    #[inline]
    pub fn project(&self, p_cam: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Build from raw `(w, x, y, z)` quaternion components, asserting the
    /// quaternion is unit within `tol` before normalizing exactly.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3], tol: f64) -> Result<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(Error::Format(format!(
                "quaternion ({}, {}, {}, {}) is not unit (norm {})",
                q[0], q[1], q[2], q[3], norm
            )));
        }
        Ok(Self {
            rotation: UnitQuaternion::from_quaternion(quat),
            translation: Vector3::new(t[0], t[1], t[2]),
        })
    }

    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.inverse();
        Self {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn cam_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn world_to_cam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Geodesic rotation angle in radians, insensitive to the quaternion
    /// double cover.
    pub fn rotation_angle(&self) -> f64 {
        let q = self.rotation.quaternion();
        2.0 * q.vector().norm().atan2(q.w.abs())
    }

    /// Camera forward axis (+z) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation * Vector3::new(0.0, 0.0, 1.0)
    }

    /// Camera up axis (-y, image rows grow downward) in world coordinates.
    pub fn up(&self) -> Vector3<f64> {
        self.rotation * Vector3::new(0.0, -1.0, 0.0)
    }
}

/// Metric depth along camera z, `[H, W, 1]`; zero marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    depth: Tensor,
}

impl DepthMap {
    pub fn new(depth: Tensor) -> Result<Self> {
        let shape = depth.shape();
        if shape.len() != 3 || shape[2] != 1 {
            return Err(Error::Size(format!(
                "depth map must be [H, W, 1], got {:?}",
                shape
            )));
        }
        if depth.data().iter().any(|&d| !d.is_finite() || d < 0.0) {
            return Err(Error::Domain(
                "depth values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { depth })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.depth
    }

    pub fn height(&self) -> usize {
        self.depth.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.depth.shape()[1]
    }

    #[inline]
    pub fn at(&self, v: usize, u: usize) -> f32 {
        self.depth.at(&[v, u, 0])
    }

    pub fn valid_count(&self) -> usize {
        self.depth.data().iter().filter(|&&d| d > 0.0).count()
    }
}

/// Split a stacked `[T, H, W, 1]` tensor (or accept a single `[H, W, 1]`)
/// into per-frame depth maps.
pub fn depth_maps_from_tensor(t: &Tensor) -> Result<Vec<DepthMap>> {
    match t.rank() {
        3 => Ok(vec![DepthMap::new(t.clone())?]),
        4 => {
            let (frames, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            if t.shape()[3] != 1 {
                return Err(Error::Size(format!(
                    "stacked depth must be [T, H, W, 1], got {:?}",
                    t.shape()
                )));
            }
            let stride = h * w;
            (0..frames)
                .map(|i| {
                    let data = t.data()[i * stride..(i + 1) * stride].to_vec();
                    DepthMap::new(Tensor::from_vec(&[h, w, 1], data)?)
                })
                .collect()
        }
        rank => Err(Error::Size(format!(
            "depth tensor must have rank 3 or 4, got {}",
            rank
        ))),
    }
}

/// A colored point cloud in world coordinates, from one source frame.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[f32; 3]>,
    pub source_frame: usize,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Lift every valid-depth pixel of a frame into world space.
pub fn unproject_depth(
    frame: &Tensor,
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<PointCloud> {
    intrinsics.validate()?;
    let shape = frame.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::Size(format!(
            "frame must be [H, W, 3], got {:?}",
            shape
        )));
    }
    let (h, w) = (shape[0], shape[1]);
    if depth.height() != h || depth.width() != w {
        return Err(Error::Size(format!(
            "depth {}x{} does not match frame {}x{}",
            depth.width(),
            depth.height(),
            w,
            h
        )));
    }

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let d = depth.at(v, u) as f64;
            if d <= 0.0 {
                continue;
            }
            let cam = Vector3::new(
                (u as f64 - intrinsics.cx) / intrinsics.fx * d,
                (v as f64 - intrinsics.cy) / intrinsics.fy * d,
                d,
            );
            positions.push(pose.cam_to_world(&cam));
            colors.push([
                frame.at(&[v, u, 0]),
                frame.at(&[v, u, 1]),
                frame.at(&[v, u, 2]),
            ]);
        }
    }
    if positions.is_empty() {
        return Err(Error::EmptyInput("no valid depth pixels to unproject".into()));
    }
    Ok(PointCloud {
        positions,
        colors,
        source_frame: 0,
    })
}

/// Point-cloud rendering configuration.
#[derive(Debug, Clone, Copy)]
pub struct RenderParams {
    pub splat: SplatParams,
    /// Importance is `-z / z_scale`; smaller values sharpen depth ordering.
    pub z_scale: f64,
    /// Points closer than this are culled.
    pub z_near: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            splat: SplatParams::default(),
            z_scale: 0.1,
            z_near: 1e-3,
        }
    }
}

fn render_cloud_tensors(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    params: &RenderParams,
) -> Result<(Tensor, Tensor)> {
    intrinsics.validate()?;
    params.splat.validate()?;
    let (h, w) = (intrinsics.height, intrinsics.width);

    // Pre-transform once; iteration order over points fixes the reduction
    // order inside the scatter.
    let cam_points: Vec<(f64, f64, f64, usize)> = cloud
        .positions
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let c = pose.world_to_cam(p);
            if c.z <= params.z_near {
                return None;
            }
            let (u, v) = intrinsics.project(&c);
            Some((u, v, c.z, i))
        })
        .collect();

    let (frame, weight) = splat_scatter(h, w, 3, params.splat.weight_epsilon, |emit| {
        for &(u, v, z, i) in &cam_points {
            emit(Contribution {
                x: u,
                y: v,
                importance: (-z / params.z_scale) as f32,
                values: &cloud.colors[i],
            });
        }
    });

    let mask_data = weight
        .data()
        .iter()
        .map(|&wv| if wv >= params.splat.validity_threshold { 1.0 } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(&[h, w, 1], mask_data)?;
    Ok((frame, mask))
}

/// Re-render a point cloud from a camera. Returns the frame and a one-frame
/// validity mask; an empty render yields an all-zero mask rather than an
/// error.
pub fn render_pointcloud(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    params: &RenderParams,
) -> Result<(Tensor, BinaryMask)> {
    let (frame, mask) = render_cloud_tensors(cloud, intrinsics, pose, params)?;
    let (h, w) = (intrinsics.height, intrinsics.width);
    let mask = BinaryMask::new(Tensor::from_vec(&[1, h, w, 1], mask.into_vec())?)?;
    Ok((frame, mask))
}

/// Parametric camera trajectory families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Orbit,
    Pan,
    Zoom,
    Shake,
    Arc,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit" => Ok(TrajectoryKind::Orbit),
            "pan" => Ok(TrajectoryKind::Pan),
            "zoom" => Ok(TrajectoryKind::Zoom),
            "shake" => Ok(TrajectoryKind::Shake),
            "arc" => Ok(TrajectoryKind::Arc),
            other => Err(Error::Config(format!("unknown trajectory kind '{}'", other))),
        }
    }
}

/// Parameters shared by the trajectory families; each kind reads the fields
/// it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    /// Total orbit/arc sweep, degrees.
    pub angle_deg: f64,
    /// Distance from the camera to the orbit pivot along the view axis.
    pub pivot_distance: f64,
    /// Total pan displacement, world frame.
    pub pan: [f64; 3],
    /// Total displacement along the view axis (zoom and arc).
    pub zoom_distance: f64,
    /// Peak jitter amplitude for shake.
    pub shake_amplitude: f64,
    /// Jitter control points for shake.
    pub shake_points: usize,
    pub shake_seed: u64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            angle_deg: 30.0,
            pivot_distance: 2.0,
            pan: [0.5, 0.0, 0.0],
            zoom_distance: 0.5,
            shake_amplitude: 0.05,
            shake_points: 5,
            shake_seed: 0,
        }
    }
}

/// Build a smooth pose sequence of the requested kind.
pub fn make_camera_trajectory(
    kind: TrajectoryKind,
    params: &TrajectoryParams,
    n_frames: usize,
    base_pose: &CameraPose,
) -> Result<Vec<CameraPose>> {
    if n_frames == 0 {
        return Err(Error::Config("trajectory needs at least one frame".into()));
    }
    let fraction = |i: usize| {
        if n_frames == 1 {
            0.0
        } else {
            i as f64 / (n_frames - 1) as f64
        }
    };

    let poses = match kind {
        TrajectoryKind::Pan => {
            let delta = Vector3::new(params.pan[0], params.pan[1], params.pan[2]);
            (0..n_frames)
                .map(|i| CameraPose::new(base_pose.rotation, base_pose.translation + fraction(i) * delta))
                .collect()
        }
        TrajectoryKind::Zoom => {
            let forward = base_pose.forward();
            (0..n_frames)
                .map(|i| {
                    CameraPose::new(
                        base_pose.rotation,
                        base_pose.translation + fraction(i) * params.zoom_distance * forward,
                    )
                })
                .collect()
        }
        TrajectoryKind::Orbit | TrajectoryKind::Arc => {
            let pivot = base_pose.translation + params.pivot_distance * base_pose.forward();
            let axis = nalgebra::Unit::new_normalize(base_pose.up());
            let theta_total = params.angle_deg.to_radians();
            let zoom = if kind == TrajectoryKind::Arc {
                params.zoom_distance
            } else {
                0.0
            };
            (0..n_frames)
                .map(|i| {
                    let s = fraction(i);
                    let rot = UnitQuaternion::from_axis_angle(&axis, theta_total * s);
                    let rotation = rot * base_pose.rotation;
                    let mut translation = pivot + rot * (base_pose.translation - pivot);
                    if zoom != 0.0 {
                        translation += s * zoom * (rot * base_pose.forward());
                    }
                    CameraPose::new(rotation, translation)
                })
                .collect()
        }
        TrajectoryKind::Shake => {
            let mut rng = SeededRng::new(params.shake_seed, 0);
            let k = params.shake_points.max(2);
            let ts: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
            let mut curves = Vec::with_capacity(3);
            for _ in 0..3 {
                let ys: Vec<f64> = (0..k)
                    .map(|_| rng.range_f64(-params.shake_amplitude, params.shake_amplitude))
                    .collect();
                curves.push(NaturalSpline1D::fit(&ts, &ys)?);
            }
            (0..n_frames)
                .map(|i| {
                    let s = fraction(i);
                    let jitter = Vector3::new(
                        curves[0].eval(s).unwrap_or(0.0),
                        curves[1].eval(s).unwrap_or(0.0),
                        curves[2].eval(s).unwrap_or(0.0),
                    );
                    CameraPose::new(base_pose.rotation, base_pose.translation + jitter)
                })
                .collect()
        }
    };
    Ok(poses)
}

/// Per-frame unproject-and-rerender along a target trajectory.
///
/// Frame `t` of the anchor is the cloud of source frame `t` (lifted with
/// `src_poses[t]`) rendered from `tgt_poses[t]`. Frames with no valid depth
/// produce a zero frame and zero mask.
pub fn synthesize_inference_anchor(
    source: &VideoClip,
    depths: &[DepthMap],
    src_poses: &[CameraPose],
    intrinsics: &CameraIntrinsics,
    tgt_poses: &[CameraPose],
    params: &RenderParams,
) -> Result<(VideoClip, BinaryMask)> {
    let t_frames = source.num_frames();
    if depths.len() != t_frames || src_poses.len() != t_frames || tgt_poses.len() != t_frames {
        return Err(Error::Size(format!(
            "lengths disagree: {} frames, {} depths, {} source poses, {} target poses",
            t_frames,
            depths.len(),
            src_poses.len(),
            tgt_poses.len()
        )));
    }
    if intrinsics.width != source.width() || intrinsics.height != source.height() {
        return Err(Error::Size(format!(
            "intrinsics are {}x{} but the clip is {}x{}",
            intrinsics.width,
            intrinsics.height,
            source.width(),
            source.height()
        )));
    }

    let per_frame: Vec<(Tensor, Tensor)> = (0..t_frames)
        .into_par_iter()
        .map(|t| {
            if depths[t].valid_count() == 0 {
                return Ok((
                    Tensor::zeros(&[source.height(), source.width(), 3]),
                    Tensor::zeros(&[source.height(), source.width(), 1]),
                ));
            }
            let frame = source.frame(t)?;
            let cloud = unproject_depth(&frame, &depths[t], intrinsics, &src_poses[t])?;
            render_cloud_tensors(&cloud, intrinsics, &tgt_poses[t], params)
        })
        .collect::<Result<_>>()?;

    let (h, w) = (source.height(), source.width());
    let mut mask_values = Tensor::zeros(&[t_frames, h, w, 1]);
    let mut frames = Vec::with_capacity(t_frames);
    for (t, (frame, mask)) in per_frame.into_iter().enumerate() {
        frames.push(frame);
        let stride = h * w;
        mask_values.data_mut()[t * stride..(t + 1) * stride].copy_from_slice(mask.data());
    }
    Ok((
        VideoClip::from_frames(&frames, source.fps())?,
        BinaryMask::new(mask_values)?,
    ))
}

/// Parse a pose file: one `frame_idx qw qx qy qz tx ty tz` line per frame,
/// ordered by frame index on output.
pub fn read_poses(path: &Path) -> Result<Vec<CameraPose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(i64, CameraPose)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::Format(format!("{}:{}: {}", path.display(), lineno + 1, e))
            })?;
        if fields.len() != 8 {
            return Err(Error::Format(format!(
                "{}:{}: expected 8 fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let pose = CameraPose::from_wxyz(
            [fields[1], fields[2], fields[3], fields[4]],
            [fields[5], fields[6], fields[7]],
            1e-3,
        )
        .map_err(|e| Error::Format(format!("{}:{}: {}", path.display(), lineno + 1, e)))?;
        rows.push((fields[0] as i64, pose));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} holds no poses", path.display())));
    }
    rows.sort_by_key(|&(idx, _)| idx);
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

pub fn write_poses(poses: &[CameraPose], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, pose) in poses.iter().enumerate() {
        let q = pose.rotation.quaternion();
        let t = pose.translation;
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            i, q.w, q.i, q.j, q.k, t.x, t.y, t.z
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parse an intrinsics file: a single `fx fy cx cy width height` line.
pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::EmptyInput(format!("{} holds no intrinsics", path.display())))?;
    let fields: Vec<f64> = line
        .split_whitespace()
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    if fields.len() != 6 {
        return Err(Error::Format(format!(
            "{}: expected 6 intrinsics fields, got {}",
            path.display(),
            fields.len()
        )));
    }
    let k = CameraIntrinsics {
        fx: fields[0],
        fy: fields[1],
        cx: fields[2],
        cy: fields[3],
        width: fields[4] as usize,
        height: fields[5] as usize,
    };
    k.validate()?;
    Ok(k)
}

pub fn write_intrinsics(k: &CameraIntrinsics, path: &Path) -> Result<()> {
    let line = format!(
        "{} {} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    );
    std::fs::write(path, line).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 40.0,
            fy: 40.0,
            cx: 16.0,
            cy: 12.0,
            width: 32,
            height: 24,
        }
    }

    /// Independent projection oracle: rotation matrix from raw quaternion
    /// components, explicit inverse transform, explicit pinhole division.
    fn oracle_project(
        k: &CameraIntrinsics,
        pose: &CameraPose,
        p_world: [f64; 3],
    ) -> (f64, f64) {
        let q = pose.rotation.quaternion();
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        // Row-major camera-to-world rotation matrix.
        let r = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        let d = [
            p_world[0] - pose.translation.x,
            p_world[1] - pose.translation.y,
            p_world[2] - pose.translation.z,
        ];
        // world-to-cam uses the transpose.
        let cam = [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ];
        (k.fx * cam[0] / cam[2] + k.cx, k.fy * cam[1] / cam[2] + k.cy)
    }

    fn random_pose(rng: &mut SeededRng) -> CameraPose {
        let axis = nalgebra::Unit::new_normalize(Vector3::new(
            rng.next_f64() - 0.5,
            rng.next_f64() - 0.5,
            rng.next_f64() - 0.5,
        ));
        CameraPose::new(
            UnitQuaternion::from_axis_angle(&axis, rng.range_f64(-1.2, 1.2)),
            Vector3::new(
                rng.range_f64(-0.5, 0.5),
                rng.range_f64(-0.5, 0.5),
                rng.range_f64(-0.5, 0.5),
            ),
        )
    }

    #[test]
    fn principal_point_unprojects_to_the_optical_axis() {
        let k = test_intrinsics();
        let mut frame = Tensor::zeros(&[24, 32, 3]);
        frame.set(&[12, 16, 0], 1.0);
        let mut depth = Tensor::zeros(&[24, 32, 1]);
        depth.set(&[12, 16, 0], 2.0);
        let cloud = unproject_depth(
            &frame,
            &DepthMap::new(depth).unwrap(),
            &k,
            &CameraPose::identity(),
        )
        .unwrap();
        assert_eq!(cloud.len(), 1);
        assert!((cloud.positions[0] - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn focal_length_offset_pixel_hits_the_unit_tangent() {
        // Use cx + fx/2 at d = 1 -> x = 0.5 (fx exceeds the sensor here).
        let k = CameraIntrinsics {
            fx: 8.0,
            fy: 8.0,
            cx: 4.0,
            cy: 4.0,
            width: 16,
            height: 16,
        };
        let mut frame = Tensor::zeros(&[16, 16, 3]);
        frame.set(&[4, 12, 0], 1.0);
        let mut depth = Tensor::zeros(&[16, 16, 1]);
        depth.set(&[4, 12, 0], 1.0);
        let cloud = unproject_depth(
            &frame,
            &DepthMap::new(depth).unwrap(),
            &k,
            &CameraPose::identity(),
        )
        .unwrap();
        // (u - cx)/fx * d = (12 - 4)/8 = 1 -> world (1, 0, 1).
        assert!((cloud.positions[0] - Vector3::new(1.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn project_unproject_roundtrip_on_random_poses() {
        let k = test_intrinsics();
        let mut rng = SeededRng::new(31, 0);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let u = rng.range_f64(0.0, 31.0);
            let v = rng.range_f64(0.0, 23.0);
            let d = rng.range_f64(0.5, 5.0);
            let cam = Vector3::new((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d);
            let world = pose.cam_to_world(&cam);
            let (ou, ov) = oracle_project(&k, &pose, [world.x, world.y, world.z]);
            assert!((ou - u).abs() <= 1e-4, "{} vs {}", ou, u);
            assert!((ov - v).abs() <= 1e-4, "{} vs {}", ov, v);
            // Implementation path agrees with the oracle.
            let back = pose.world_to_cam(&world);
            let (iu, iv) = k.project(&back);
            assert!((iu - ou).abs() <= 1e-9 && (iv - ov).abs() <= 1e-9);
        }
    }

    #[test]
    fn pose_inverse_composes_to_identity() {
        let mut rng = SeededRng::new(8, 1);
        for _ in 0..50 {
            let pose = random_pose(&mut rng);
            let ident = pose.inverse().compose(&pose);
            assert!(ident.rotation_angle() < 1e-6);
            assert!(ident.translation.norm() < 1e-6);
        }
    }

    fn noise_frame(h: usize, w: usize, rng: &mut SeededRng) -> Tensor {
        let mut t = Tensor::zeros(&[h, w, 3]);
        for v in t.data_mut() {
            *v = rng.next_f32();
        }
        t
    }

    #[test]
    fn rendering_from_the_source_camera_reproduces_the_frame() {
        let k = test_intrinsics();
        let mut rng = SeededRng::new(55, 0);
        let frame = noise_frame(24, 32, &mut rng);
        let depth = DepthMap::new(Tensor::full(&[24, 32, 1], 2.0)).unwrap();
        let pose = CameraPose::identity();
        let cloud = unproject_depth(&frame, &depth, &k, &pose).unwrap();
        let (rendered, mask) =
            render_pointcloud(&cloud, &k, &pose, &RenderParams::default()).unwrap();
        let covered = mask.mean();
        assert!(covered >= 0.99, "mask covers only {}", covered);
        let mut bad = 0;
        for i in 0..24 * 32 {
            if mask.values().data()[i] == 1.0 {
                for c in 0..3 {
                    if (rendered.data()[i * 3 + c] - frame.data()[i * 3 + c]).abs() > 2.0 / 255.0 {
                        bad += 1;
                    }
                }
            }
        }
        assert_eq!(bad, 0);
    }

    #[test]
    fn camera_behind_the_cloud_renders_nothing() {
        let k = test_intrinsics();
        let cloud = PointCloud {
            positions: vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.1, 0.0, 2.0)],
            colors: vec![[1.0, 0.0, 0.0]; 2],
            source_frame: 0,
        };
        // Move the camera past the cloud so every point has z <= 0.
        let pose = CameraPose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 5.0));
        let (_, mask) = render_pointcloud(&cloud, &k, &pose, &RenderParams::default()).unwrap();
        assert_eq!(mask.mean(), 0.0);
    }

    #[test]
    fn nearer_point_wins_a_contested_ray() {
        let k = test_intrinsics();
        let cloud = PointCloud {
            positions: vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 10.0)],
            colors: vec![[0.9, 0.1, 0.2], [0.0, 1.0, 1.0]],
            source_frame: 0,
        };
        let (rendered, _) = render_pointcloud(
            &cloud,
            &k,
            &CameraPose::identity(),
            &RenderParams::default(),
        )
        .unwrap();
        let (u, v) = (16, 12); // principal point
        for (c, want) in [0.9f32, 0.1, 0.2].iter().enumerate() {
            assert!((rendered.at(&[v, u, c]) - want).abs() < 1e-3);
        }
    }

    #[test]
    fn depth_ordering_sharpens_as_z_scale_shrinks() {
        let k = test_intrinsics();
        let cloud = PointCloud {
            positions: vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 1.2)],
            colors: vec![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]],
            source_frame: 0,
        };
        let params = RenderParams {
            z_scale: 0.01,
            ..RenderParams::default()
        };
        let (rendered, _) =
            render_pointcloud(&cloud, &k, &CameraPose::identity(), &params).unwrap();
        assert!(rendered.at(&[12, 16, 0]) > 0.999);
    }

    #[test]
    fn frustum_pass_set_grows_with_field_of_view() {
        let mut rng = SeededRng::new(91, 0);
        let pose = CameraPose::identity();
        let cloud: Vec<Vector3<f64>> = (0..500)
            .map(|_| {
                Vector3::new(
                    rng.range_f64(-3.0, 3.0),
                    rng.range_f64(-3.0, 3.0),
                    rng.range_f64(0.2, 6.0),
                )
            })
            .collect();
        let narrow = test_intrinsics();
        let wide = CameraIntrinsics {
            fx: narrow.fx * 0.5,
            fy: narrow.fy * 0.5,
            ..narrow
        };
        let pass = |k: &CameraIntrinsics| -> Vec<usize> {
            cloud
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    let c = pose.world_to_cam(p);
                    if c.z <= 1e-3 {
                        return false;
                    }
                    let (u, v) = k.project(&c);
                    k.contains(u, v)
                })
                .map(|(i, _)| i)
                .collect()
        };
        let narrow_set = pass(&narrow);
        let wide_set = pass(&wide);
        for i in &narrow_set {
            assert!(wide_set.contains(i), "point {} lost when widening FOV", i);
        }
        assert!(wide_set.len() >= narrow_set.len());
    }

    #[test]
    fn zero_angle_orbit_is_constant() {
        let base = CameraPose::identity();
        let params = TrajectoryParams {
            angle_deg: 0.0,
            ..TrajectoryParams::default()
        };
        let poses = make_camera_trajectory(TrajectoryKind::Orbit, &params, 5, &base).unwrap();
        for p in &poses {
            assert!(p.rotation_angle() < 1e-12);
            assert!(p.translation.norm() < 1e-12);
        }
    }

    #[test]
    fn quarter_orbit_lands_on_the_circle() {
        // Closed-form circle oracle: the identity camera sits at the origin
        // looking at the pivot (0, 0, r). An orbit about the up axis keeps
        // the camera in the x-z plane; rotating the pivot-relative offset
        // x + i*z by e^{i*theta} traces the circle.
        let r = 2.0;
        let base = CameraPose::identity();
        let params = TrajectoryParams {
            angle_deg: 90.0,
            pivot_distance: r,
            ..TrajectoryParams::default()
        };
        let poses = make_camera_trajectory(TrajectoryKind::Orbit, &params, 10, &base).unwrap();
        for (i, pose) in poses.iter().enumerate() {
            let theta = std::f64::consts::FRAC_PI_2 * i as f64 / 9.0;
            // (0, -r) rotated: real/imag parts of (-i r) * e^{i theta}.
            let (x, z) = (r * theta.sin(), -r * theta.cos());
            let oracle = Vector3::new(x, 0.0, r + z);
            assert!(
                (pose.translation - oracle).norm() <= 1e-5,
                "frame {}: got {:?}, oracle {:?}",
                i,
                pose.translation,
                oracle
            );
        }
        // Final pose has swept the full quarter turn.
        let last = poses.last().unwrap();
        assert!((last.translation - Vector3::new(r, 0.0, r)).norm() <= 1e-5);
    }

    #[test]
    fn pan_translates_linearly() {
        let base = CameraPose::identity();
        let params = TrajectoryParams {
            pan: [3.0, 0.0, 0.0],
            ..TrajectoryParams::default()
        };
        let poses = make_camera_trajectory(TrajectoryKind::Pan, &params, 4, &base).unwrap();
        for (i, p) in poses.iter().enumerate() {
            let want = i as f64 / 3.0 * 3.0;
            assert!((p.translation.x - want).abs() < 1e-12);
            assert_eq!(p.rotation, base.rotation);
        }
    }

    #[test]
    fn shake_is_seed_deterministic() {
        let base = CameraPose::identity();
        let params = TrajectoryParams::default();
        let a = make_camera_trajectory(TrajectoryKind::Shake, &params, 8, &base).unwrap();
        let b = make_camera_trajectory(TrajectoryKind::Shake, &params, 8, &base).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(p.translation.norm() <= params.shake_amplitude * 3.0);
        }
    }

    #[test]
    fn unknown_trajectory_kind_is_a_config_error() {
        assert!(matches!(
            "spiral".parse::<TrajectoryKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_target_trajectory_reproduces_the_source() {
        let k = test_intrinsics();
        let mut rng = SeededRng::new(2, 0);
        let frames: Vec<Tensor> = (0..3).map(|_| noise_frame(24, 32, &mut rng)).collect();
        let clip = VideoClip::from_frames(&frames, 16.0).unwrap();
        let depths: Vec<DepthMap> = (0..3)
            .map(|_| DepthMap::new(Tensor::full(&[24, 32, 1], 1.5)).unwrap())
            .collect();
        let poses = vec![CameraPose::identity(); 3];
        let (anchor, mask) = synthesize_inference_anchor(
            &clip,
            &depths,
            &poses,
            &k,
            &poses,
            &RenderParams::default(),
        )
        .unwrap();
        assert!(mask.mean() >= 0.99);
        for t in 0..3 {
            let err = anchor
                .frame(t)
                .unwrap()
                .max_abs_diff(&clip.frame(t).unwrap())
                .unwrap();
            assert!(err <= 2.0 / 255.0, "frame {} error {}", t, err);
        }
    }

    #[test]
    fn all_invalid_depth_gives_a_zero_mask_frame() {
        let k = test_intrinsics();
        let mut rng = SeededRng::new(3, 0);
        let frames: Vec<Tensor> = (0..2).map(|_| noise_frame(24, 32, &mut rng)).collect();
        let clip = VideoClip::from_frames(&frames, 16.0).unwrap();
        let depths = vec![
            DepthMap::new(Tensor::full(&[24, 32, 1], 1.5)).unwrap(),
            DepthMap::new(Tensor::zeros(&[24, 32, 1])).unwrap(),
        ];
        let poses = vec![CameraPose::identity(); 2];
        let (_, mask) = synthesize_inference_anchor(
            &clip,
            &depths,
            &poses,
            &k,
            &poses,
            &RenderParams::default(),
        )
        .unwrap();
        let stride = 24 * 32;
        let frame1: f32 = mask.values().data()[stride..].iter().sum();
        assert_eq!(frame1, 0.0);
        let frame0: f32 = mask.values().data()[..stride].iter().sum();
        assert!(frame0 > 0.0);
    }

    #[test]
    fn pose_files_roundtrip_and_report_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = SeededRng::new(4, 0);
        let poses: Vec<CameraPose> = (0..4).map(|_| random_pose(&mut rng)).collect();
        let path = dir.path().join("poses.txt");
        write_poses(&poses, &path).unwrap();
        let back = read_poses(&path).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.translation - b.translation).norm() < 1e-9);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-9);
        }

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "0 1 0 0 0 0 0 0\n1 not a pose\n").unwrap();
        match read_poses(&bad) {
            Err(Error::Format(msg)) => assert!(msg.contains(":2:"), "message: {}", msg),
            other => panic!("expected FormatError, got {:?}", other),
        }
    }

    #[test]
    fn intrinsics_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let k = test_intrinsics();
        let path = dir.path().join("intrinsics.txt");
        write_intrinsics(&k, &path).unwrap();
        assert_eq!(read_intrinsics(&path).unwrap(), k);
    }

    #[test]
    fn stacked_depth_tensor_splits_per_frame() {
        let t = Tensor::full(&[3, 4, 5, 1], 2.0);
        let maps = depth_maps_from_tensor(&t).unwrap();
        assert_eq!(maps.len(), 3);
        assert_eq!(maps[0].height(), 4);
        assert_eq!(maps[0].width(), 5);
    }
}
