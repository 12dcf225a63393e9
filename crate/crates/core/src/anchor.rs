//! Training-triplet assembly: source/target crop clips plus a synthesized
//! anchor clip with its validity mask.
//!
//! The anchor is the reference source frame forward-warped along the target
//! trajectory (offset-aware flow + softmax splatting), with optional
//! structured noise injected before warping and a background fill in
//! invalid regions. Everything is a pure function of (video, tracks,
//! config, seed).

use std::path::Path;

use rayon::prelude::*;

use crate::clip::{BinaryMask, VideoClip};
use crate::error::{Error, Result};
use crate::io;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::trajectory::{
    extract_crop_clip, generate_crop_trajectory, CropTrajectory, VideoDims,
};
use crate::warp::{compose_offset_flow, softmax_splat, validity_mask, FlowField, SplatParams};

/// Fluorescent pink fill, (255, 20, 147) in 8-bit.
pub const FLUORESCENT_PINK: [f32; 3] = [1.0, 20.0 / 255.0, 147.0 / 255.0];

/// Fill color for invalid anchor regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    Black,
    Fluorescent,
}

impl BackgroundMode {
    pub fn color(self) -> [f32; 3] {
        match self {
            BackgroundMode::Black => [0.0; 3],
            BackgroundMode::Fluorescent => FLUORESCENT_PINK,
        }
    }
}

/// Which source frame the anchor is warped from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceFrame {
    Fixed(usize),
    /// Uniform over all frames, drawn from the anchor RNG stream.
    Random,
}

/// Anchor augmentation configuration.
#[derive(Debug, Clone, Copy)]
pub struct AnchorAugConfig {
    pub background: BackgroundMode,
    /// Upper bound of the per-channel noise magnitude draw, in [0, 1].
    pub noise_max: f32,
    pub reference: ReferenceFrame,
}

impl Default for AnchorAugConfig {
    fn default() -> Self {
        Self {
            background: BackgroundMode::Black,
            noise_max: 0.5,
            reference: ReferenceFrame::Fixed(0),
        }
    }
}

impl AnchorAugConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_max) {
            return Err(Error::Config(format!(
                "noise_max must be in [0, 1], got {}",
                self.noise_max
            )));
        }
        Ok(())
    }
}

/// Metadata recorded with every triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletMeta {
    pub seed: u64,
    pub reference_index: usize,
    pub source_offsets: Vec<(i64, i64)>,
    pub target_offsets: Vec<(i64, i64)>,
}

/// A complete `(V_s, V_a, V_t, M_a)` bundle.
#[derive(Debug, Clone)]
pub struct TrainingTriplet {
    pub source: VideoClip,
    pub anchor: VideoClip,
    pub target: VideoClip,
    pub anchor_mask: BinaryMask,
    pub meta: TripletMeta,
}

impl TrainingTriplet {
    fn check_aligned(&self) -> Result<()> {
        let shape = self.source.frames().shape();
        for (name, other) in [
            ("anchor", self.anchor.frames().shape()),
            ("target", self.target.frames().shape()),
        ] {
            if other != shape {
                return Err(Error::Size(format!(
                    "{} clip shape {:?} does not match source {:?}",
                    name, other, shape
                )));
            }
        }
        let mask_shape = self.anchor_mask.values().shape();
        if mask_shape[..3] != shape[..3] {
            return Err(Error::Size(format!(
                "mask shape {:?} does not align with clips {:?}",
                mask_shape, shape
            )));
        }
        Ok(())
    }
}

/// Inject per-channel Gaussian noise into one frame, clamped to [0, 1].
///
/// Draw order is frozen: first one uniform magnitude per channel
/// (sigma_c ~ U[0, noise_max], channels 0..3), then one standard normal per
/// element in storage order (row-major, channel fastest).
pub fn inject_structured_noise(frame: &Tensor, rng: &mut SeededRng, noise_max: f32) -> Result<Tensor> {
    let shape = frame.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::Size(format!(
            "frame must be [H, W, 3], got {:?}",
            shape
        )));
    }
    if !(0.0..=1.0).contains(&noise_max) {
        return Err(Error::Config(format!(
            "noise_max must be in [0, 1], got {}",
            noise_max
        )));
    }
    let sigmas: Vec<f64> = (0..3).map(|_| rng.range_f64(0.0, noise_max as f64)).collect();
    let mut out = frame.clone();
    for v in out.data_mut().chunks_exact_mut(3) {
        for (c, value) in v.iter_mut().enumerate() {
            let noised = *value as f64 + sigmas[c] * rng.next_gaussian();
            *value = noised.clamp(0.0, 1.0) as f32;
        }
    }
    Ok(out)
}

/// Replace `mask == 0` pixels with the background color; `mask == 1` pixels
/// pass through untouched.
pub fn apply_background(
    warped: &VideoClip,
    mask: &BinaryMask,
    background: BackgroundMode,
) -> Result<VideoClip> {
    let (t, h, w) = (warped.num_frames(), warped.height(), warped.width());
    if mask.values().shape() != [t, h, w, 1] {
        return Err(Error::Size(format!(
            "mask shape {:?} does not match clip [{}, {}, {}, 1]",
            mask.values().shape(),
            t,
            h,
            w
        )));
    }
    let color = background.color();
    let mut frames = warped.frames().clone();
    for (pix, chunk) in frames.data_mut().chunks_exact_mut(3).enumerate() {
        if mask.values().data()[pix] == 0.0 {
            chunk.copy_from_slice(&color);
        }
    }
    VideoClip::new(frames, warped.fps())
}

/// Synthesize the anchor clip for a source clip.
///
/// The reference frame (fixed or drawn uniformly from `rng`) is noised,
/// composed with the offset-aware flow, splatted frame by frame, masked, and
/// background-filled. Returns `(anchor, mask, reference_index)`.
///
/// The supplied tracks must be queried at the chosen reference frame;
/// a mismatch is a `SizeError`.
pub fn synthesize_anchor_video(
    source: &VideoClip,
    tracks: &FlowField,
    src_traj: &CropTrajectory,
    tgt_traj: &CropTrajectory,
    aug: &AnchorAugConfig,
    splat: &SplatParams,
    rng: &mut SeededRng,
) -> Result<(VideoClip, BinaryMask, usize)> {
    aug.validate()?;
    splat.validate()?;
    let t_frames = source.num_frames();
    if src_traj.len() != t_frames || tgt_traj.len() != t_frames {
        return Err(Error::Size(format!(
            "trajectory lengths {}/{} do not match clip length {}",
            src_traj.len(),
            tgt_traj.len(),
            t_frames
        )));
    }
    if tracks.num_frames() != t_frames {
        return Err(Error::Size(format!(
            "track field has {} frames, clip has {}",
            tracks.num_frames(),
            t_frames
        )));
    }
    let crop = src_traj.crop_size;
    if tgt_traj.crop_size != crop {
        return Err(Error::Size(
            "source and target trajectories must share one crop size".into(),
        ));
    }
    if (source.width(), source.height()) != crop {
        return Err(Error::Size(format!(
            "source clip is {}x{} but trajectories carry crop size {}x{}",
            source.width(),
            source.height(),
            crop.0,
            crop.1
        )));
    }

    let reference_index = match aug.reference {
        ReferenceFrame::Fixed(k) if k < t_frames => k,
        ReferenceFrame::Fixed(k) => {
            return Err(Error::Bounds(format!(
                "reference index {} outside 0..{}",
                k, t_frames
            )))
        }
        ReferenceFrame::Random => rng.next_below(t_frames),
    };
    if tracks.reference_index() != reference_index {
        return Err(Error::Size(format!(
            "tracks are queried at frame {} but the anchor reference is {}",
            tracks.reference_index(),
            reference_index
        )));
    }

    let mut reference = source.frame(reference_index)?;
    if aug.noise_max > 0.0 {
        reference = inject_structured_noise(&reference, rng, aug.noise_max)?;
    }

    let combined = compose_offset_flow(tracks, src_traj.offsets[reference_index], tgt_traj, crop)?;
    let (w, h) = crop;

    let per_frame: Vec<(Tensor, Tensor)> = (0..t_frames)
        .into_par_iter()
        .map(|t| {
            let flow_t = {
                let stride = h * w * 2;
                let data = combined.tensor().data()[t * stride..(t + 1) * stride].to_vec();
                Tensor::from_vec(&[h, w, 2], data)?
            };
            softmax_splat(&reference, &flow_t, None, splat)
        })
        .collect::<Result<_>>()?;

    let mut frames = Vec::with_capacity(t_frames);
    let mut weights = Tensor::zeros(&[t_frames, h, w, 1]);
    for (t, (frame, weight)) in per_frame.into_iter().enumerate() {
        frames.push(frame);
        let stride = h * w;
        weights.data_mut()[t * stride..(t + 1) * stride].copy_from_slice(weight.data());
    }
    let anchor_raw = VideoClip::from_frames(&frames, source.fps())?;
    let mask = validity_mask(&weights, splat.validity_threshold)?;
    let anchor = apply_background(&anchor_raw, &mask, aug.background)?;
    Ok((anchor, mask, reference_index))
}

/// How the per-triplet crop size is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CropSpec {
    /// Square window with side `fraction * min(W, H)`, rounded.
    Fraction(f64),
    Size(usize, usize),
}

impl Default for CropSpec {
    fn default() -> Self {
        CropSpec::Fraction(0.6)
    }
}

impl CropSpec {
    pub fn resolve(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        match *self {
            CropSpec::Fraction(f) => {
                if !(0.0 < f && f <= 1.0) {
                    return Err(Error::Config(format!(
                        "crop fraction must be in (0, 1], got {}",
                        f
                    )));
                }
                let side = ((width.min(height) as f64) * f).round().max(1.0) as usize;
                Ok((side, side))
            }
            CropSpec::Size(w, h) => Ok((w, h)),
        }
    }
}

/// Everything `build_triplet` needs besides the inputs and the seed.
#[derive(Debug, Clone)]
pub struct TripletConfig {
    pub crop: CropSpec,
    /// Random-walk motion magnitude in [0, 1].
    pub scale: f64,
    pub aug: AnchorAugConfig,
    pub splat: SplatParams,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            crop: CropSpec::default(),
            scale: 0.5,
            aug: AnchorAugConfig::default(),
            splat: SplatParams::default(),
        }
    }
}

/// Build a full training triplet from one monocular clip and its tracks.
///
/// RNG streams are split per role (source walk, target walk, anchor), so the
/// result is byte-identical for identical `(video, tracks, config, seed)`.
pub fn build_triplet(
    video: &VideoClip,
    tracks: &FlowField,
    config: &TripletConfig,
    seed: u64,
) -> Result<TrainingTriplet> {
    if tracks.height() != video.height() || tracks.width() != video.width() {
        return Err(Error::Size(format!(
            "tracks cover {}x{} but the video is {}x{}",
            tracks.width(),
            tracks.height(),
            video.width(),
            video.height()
        )));
    }
    let crop = config.crop.resolve(video.width(), video.height())?;
    let dims = VideoDims {
        width: video.width(),
        height: video.height(),
        frames: video.num_frames(),
        fps: video.fps(),
    };
    let root = SeededRng::new(seed, 0);
    let mut src_rng = root.split(0);
    let mut tgt_rng = root.split(1);
    let mut anchor_rng = root.split(2);

    let src_traj = generate_crop_trajectory(dims, crop, config.scale, &mut src_rng)?;
    let tgt_traj = generate_crop_trajectory(dims, crop, config.scale, &mut tgt_rng)?;
    let source = extract_crop_clip(video, &src_traj)?;
    let target = extract_crop_clip(video, &tgt_traj)?;
    let (anchor, anchor_mask, reference_index) = synthesize_anchor_video(
        &source,
        tracks,
        &src_traj,
        &tgt_traj,
        &config.aug,
        &config.splat,
        &mut anchor_rng,
    )?;

    let triplet = TrainingTriplet {
        source,
        anchor,
        target,
        anchor_mask,
        meta: TripletMeta {
            seed,
            reference_index,
            source_offsets: src_traj.offsets,
            target_offsets: tgt_traj.offsets,
        },
    };
    triplet.check_aligned()?;
    Ok(triplet)
}

/// Write a triplet as `source/`, `anchor/`, `target/` image sequences plus
/// `anchor_mask.vtnsr` and `meta.txt`. `config_echo` is appended verbatim to
/// the metadata so the configuration travels with the data.
pub fn write_triplet(triplet: &TrainingTriplet, dir: &Path, config_echo: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_image_sequence(&triplet.source, dir.join("source"))?;
    io::save_image_sequence(&triplet.anchor, dir.join("anchor"))?;
    io::save_image_sequence(&triplet.target, dir.join("target"))?;
    io::write_tensor(triplet.anchor_mask.values(), dir.join("anchor_mask.vtnsr"))?;

    let fmt_offsets = |offsets: &[(i64, i64)]| {
        offsets
            .iter()
            .map(|&(x, y)| format!("{},{}", x, y))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let meta = format!(
        "seed = {}\nreference_index = {}\nsource_offsets = {}\ntarget_offsets = {}\n\nconfig_echo:\n{}",
        triplet.meta.seed,
        triplet.meta.reference_index,
        fmt_offsets(&triplet.meta.source_offsets),
        fmt_offsets(&triplet.meta.target_offsets),
        config_echo
    );
    let meta_path = dir.join("meta.txt");
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_clip(t: usize, h: usize, w: usize) -> VideoClip {
        let mut frames = Tensor::zeros(&[t, h, w, 3]);
        for ti in 0..t {
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        let v = ((x + 3 * y + 7 * ti + 11 * c) % 64) as f32 / 63.0;
                        frames.set(&[ti, y, x, c], v);
                    }
                }
            }
        }
        VideoClip::new(frames, 16.0).unwrap()
    }

    fn identity_tracks(t: usize, h: usize, w: usize, reference: usize) -> FlowField {
        FlowField::new(Tensor::zeros(&[t, h, w, 2]), reference).unwrap()
    }

    fn static_traj(len: usize, offset: (i64, i64), crop: (usize, usize), src: (usize, usize)) -> CropTrajectory {
        CropTrajectory {
            offsets: vec![offset; len],
            crop_size: crop,
            source_size: src,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let frame = gradient_clip(1, 4, 4).frame(0).unwrap();
        let mut rng = SeededRng::new(1, 0);
        let out = inject_structured_noise(&frame, &mut rng, 0.0).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn noise_empirical_std_tracks_drawn_sigma() {
        let frame = Tensor::full(&[256, 256, 3], 0.5);
        let mut rng = SeededRng::new(9, 2);
        let mut probe = rng.clone();
        let _ = inject_structured_noise(&frame, &mut rng, 0.5).unwrap();

        // Re-derive the draws: 3 sigmas, then the per-element normals in
        // storage order; compare each channel's sample std against sigma_c.
        let sigmas: Vec<f64> = (0..3).map(|_| probe.range_f64(0.0, 0.5)).collect();
        let n = 256 * 256;
        let mut sums = [0.0f64; 3];
        let mut sumsq = [0.0f64; 3];
        for _ in 0..n {
            for c in 0..3 {
                let noise = sigmas[c] * probe.next_gaussian();
                sums[c] += noise;
                sumsq[c] += noise * noise;
            }
        }
        for c in 0..3 {
            let mean = sums[c] / n as f64;
            let std = (sumsq[c] / n as f64 - mean * mean).sqrt();
            assert!(
                (std - sigmas[c]).abs() <= 0.05 * sigmas[c].max(1e-9),
                "channel {}: std {} vs sigma {}",
                c,
                std,
                sigmas[c]
            );
        }
    }

    #[test]
    fn noisy_outputs_stay_clamped() {
        for seed in 0..100 {
            let frame = gradient_clip(1, 8, 8).frame(0).unwrap();
            let mut rng = SeededRng::new(seed, 3);
            let out = inject_structured_noise(&frame, &mut rng, 1.0).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn all_ones_mask_keeps_the_clip() {
        let clip = gradient_clip(2, 4, 4);
        let mask = BinaryMask::all_ones(2, 4, 4);
        let out = apply_background(&clip, &mask, BackgroundMode::Fluorescent).unwrap();
        assert_eq!(out.frames(), clip.frames());
    }

    #[test]
    fn all_zeros_mask_paints_fluorescent_pink() {
        let clip = gradient_clip(1, 2, 2);
        let mask = BinaryMask::new(Tensor::zeros(&[1, 2, 2, 1])).unwrap();
        let out = apply_background(&clip, &mask, BackgroundMode::Fluorescent).unwrap();
        for pix in out.frames().data().chunks_exact(3) {
            assert_eq!(pix, FLUORESCENT_PINK);
        }
    }

    #[test]
    fn checker_mask_selects_per_pixel() {
        let clip = gradient_clip(1, 4, 4);
        let mut mvals = Tensor::zeros(&[1, 4, 4, 1]);
        for y in 0..4 {
            for x in 0..4 {
                mvals.set(&[0, y, x, 0], ((x + y) % 2) as f32);
            }
        }
        let mask = BinaryMask::new(mvals).unwrap();
        let out = apply_background(&clip, &mask, BackgroundMode::Black).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                for c in 0..3 {
                    let want = if (x + y) % 2 == 1 {
                        clip.frames().at(&[0, y, x, c])
                    } else {
                        0.0
                    };
                    assert_eq!(out.frames().at(&[0, y, x, c]), want);
                }
            }
        }
    }

    fn no_noise_aug(reference: ReferenceFrame) -> AnchorAugConfig {
        AnchorAugConfig {
            background: BackgroundMode::Black,
            noise_max: 0.0,
            reference,
        }
    }

    #[test]
    fn identity_tracks_and_equal_trajectories_reproduce_the_reference() {
        let video = gradient_clip(4, 12, 12);
        let crop = (6, 6);
        let traj = static_traj(4, (3, 2), crop, (12, 12));
        let source = extract_crop_clip(&video, &traj).unwrap();
        let tracks = identity_tracks(4, 12, 12, 1);
        let mut rng = SeededRng::new(0, 0);
        let (anchor, mask, reference) = synthesize_anchor_video(
            &source,
            &tracks,
            &traj,
            &traj,
            &no_noise_aug(ReferenceFrame::Fixed(1)),
            &SplatParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(reference, 1);
        assert_eq!(mask.mean(), 1.0);
        // Every anchor frame is the reference frame; at t = ref it equals
        // the source frame exactly.
        let ref_frame = source.frame(1).unwrap();
        for t in 0..4 {
            assert_eq!(anchor.frame(t).unwrap(), ref_frame);
        }
        assert_eq!(anchor.frame(1).unwrap(), source.frame(1).unwrap());
    }

    #[test]
    fn mask_matches_splat_weights_before_background_fill() {
        let video = gradient_clip(3, 16, 16);
        let crop = (8, 8);
        let src_traj = static_traj(3, (4, 4), crop, (16, 16));
        let tgt_traj = CropTrajectory {
            offsets: vec![(4, 4), (6, 4), (8, 4)],
            crop_size: crop,
            source_size: (16, 16),
        };
        let source = extract_crop_clip(&video, &src_traj).unwrap();
        let tracks = identity_tracks(3, 16, 16, 0);
        let splat = SplatParams::default();
        let mut rng = SeededRng::new(0, 0);
        let (_, mask, _) = synthesize_anchor_video(
            &source,
            &tracks,
            &src_traj,
            &tgt_traj,
            &no_noise_aug(ReferenceFrame::Fixed(0)),
            &splat,
            &mut rng,
        )
        .unwrap();
        // Recompute weights independently and compare the thresholding.
        let combined = compose_offset_flow(&tracks, (4, 4), &tgt_traj, crop).unwrap();
        let reference = source.frame(0).unwrap();
        for t in 0..3 {
            let stride = 8 * 8 * 2;
            let flow_t = Tensor::from_vec(
                &[8, 8, 2],
                combined.tensor().data()[t * stride..(t + 1) * stride].to_vec(),
            )
            .unwrap();
            let (_, weight) = softmax_splat(&reference, &flow_t, None, &splat).unwrap();
            for (pix, &wv) in weight.data().iter().enumerate() {
                let expect = if wv >= splat.validity_threshold { 1.0 } else { 0.0 };
                assert_eq!(mask.values().data()[t * 64 + pix], expect);
            }
        }
    }

    #[test]
    fn tracks_must_declare_the_anchor_reference() {
        let video = gradient_clip(3, 8, 8);
        let traj = static_traj(3, (0, 0), (8, 8), (8, 8));
        let source = extract_crop_clip(&video, &traj).unwrap();
        let tracks = identity_tracks(3, 8, 8, 0);
        let mut rng = SeededRng::new(0, 0);
        let out = synthesize_anchor_video(
            &source,
            &tracks,
            &traj,
            &traj,
            &no_noise_aug(ReferenceFrame::Fixed(2)),
            &SplatParams::default(),
            &mut rng,
        );
        assert!(matches!(out, Err(Error::Size(_))));
    }

    #[test]
    fn triplets_are_deterministic_in_the_seed() {
        let video = gradient_clip(6, 24, 24);
        let tracks = identity_tracks(6, 24, 24, 0);
        let config = TripletConfig {
            crop: CropSpec::Size(12, 12),
            scale: 0.6,
            aug: AnchorAugConfig {
                noise_max: 0.3,
                ..no_noise_aug(ReferenceFrame::Fixed(0))
            },
            splat: SplatParams::default(),
        };
        let a = build_triplet(&video, &tracks, &config, 42).unwrap();
        let b = build_triplet(&video, &tracks, &config, 42).unwrap();
        assert_eq!(a.source.frames(), b.source.frames());
        assert_eq!(a.anchor.frames(), b.anchor.frames());
        assert_eq!(a.target.frames(), b.target.frames());
        assert_eq!(a.anchor_mask.values(), b.anchor_mask.values());
        assert_eq!(a.meta, b.meta);

        let c = build_triplet(&video, &tracks, &config, 43).unwrap();
        assert_ne!(a.source.frames(), c.source.frames());
    }

    #[test]
    fn static_zero_scale_triplet_degenerates_to_repeats() {
        let video = gradient_clip(4, 16, 16);
        let tracks = identity_tracks(4, 16, 16, 0);
        let config = TripletConfig {
            crop: CropSpec::Size(8, 8),
            scale: 0.0,
            aug: no_noise_aug(ReferenceFrame::Fixed(0)),
            splat: SplatParams::default(),
        };
        let triplet = build_triplet(&video, &tracks, &config, 7).unwrap();
        // Both walks are static; the same start draw gives the same offsets.
        if triplet.meta.source_offsets == triplet.meta.target_offsets {
            assert_eq!(triplet.source.frames(), triplet.target.frames());
        }
        // Anchor repeats the reference frame.
        let ref_frame = triplet.source.frame(0).unwrap();
        for t in 0..4 {
            assert_eq!(triplet.anchor.frame(t).unwrap(), ref_frame);
        }
        assert_eq!(triplet.anchor_mask.mean(), 1.0);
    }

    #[test]
    fn random_reference_draws_uniformly_and_requires_matching_tracks() {
        let video = gradient_clip(5, 8, 8);
        let traj = static_traj(5, (0, 0), (8, 8), (8, 8));
        let source = extract_crop_clip(&video, &traj).unwrap();
        // Pre-draw the index the anchor stream will pick, then hand over
        // tracks queried at exactly that frame.
        let rng = SeededRng::new(12, 0);
        let expected_ref = rng.clone().next_below(5);
        let tracks = identity_tracks(5, 8, 8, expected_ref);
        let mut run_rng = rng;
        let (_, _, reference) = synthesize_anchor_video(
            &source,
            &tracks,
            &traj,
            &traj,
            &no_noise_aug(ReferenceFrame::Random),
            &SplatParams::default(),
            &mut run_rng,
        )
        .unwrap();
        assert_eq!(reference, expected_ref);
    }

    #[test]
    fn triplet_directory_layout() {
        let video = gradient_clip(3, 16, 16);
        let tracks = identity_tracks(3, 16, 16, 0);
        let config = TripletConfig {
            crop: CropSpec::Size(8, 8),
            scale: 0.5,
            aug: no_noise_aug(ReferenceFrame::Fixed(0)),
            splat: SplatParams::default(),
        };
        let triplet = build_triplet(&video, &tracks, &config, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_triplet(&triplet, dir.path(), "demo = true\n").unwrap();
        for sub in ["source", "anchor", "target"] {
            for t in 0..3 {
                assert!(dir.path().join(sub).join(format!("frame_{:06}.png", t)).exists());
            }
        }
        assert!(dir.path().join("anchor_mask.vtnsr").exists());
        let meta = std::fs::read_to_string(dir.path().join("meta.txt")).unwrap();
        assert!(meta.contains("seed = 3"));
        assert!(meta.contains("reference_index = 0"));
        assert!(meta.contains("demo = true"));
    }
}
