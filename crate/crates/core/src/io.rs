//! Bit-exact file I/O: the VTNSR raw tensor format and PNG image sequences.
//!
//! VTNSR layout: 8-byte magic `VTNSR\0\0\x01`, rank as u32 little-endian,
//! `rank` dimension sizes as u32 little-endian, 4 reserved zero bytes, then
//! the payload as f32 little-endian in row-major order. Serialization is
//! deterministic: identical tensors produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::clip::{VideoClip, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const VTNSR_MAGIC: [u8; 8] = [b'V', b'T', b'N', b'S', b'R', 0, 0, 1];

/// Serialize a tensor to the VTNSR byte layout.
pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(&VTNSR_MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &dim in t.shape() {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 4]);
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a tensor from VTNSR bytes.
pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    if bytes.is_empty() {
        return Err(Error::Format("empty VTNSR file".into()));
    }
    if bytes.len() < 12 {
        return Err(Error::Format(format!(
            "VTNSR header needs at least 12 bytes, file has {}",
            bytes.len()
        )));
    }
    if bytes[0..8] != VTNSR_MAGIC {
        return Err(Error::Format("bad VTNSR magic".into()));
    }
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_len = 12 + 4 * rank + 4;
    if bytes.len() < header_len {
        return Err(Error::Format(format!(
            "VTNSR header truncated: rank {} needs {} bytes, file has {}",
            rank,
            header_len,
            bytes.len()
        )));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let off = 12 + 4 * i;
        let dim = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        count = count
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("VTNSR dimension product overflows".into()))?;
        shape.push(dim);
    }
    let reserved = &bytes[12 + 4 * rank..header_len];
    if reserved != [0u8; 4] {
        return Err(Error::Format("VTNSR reserved bytes must be zero".into()));
    }
    let payload = &bytes[header_len..];
    if payload.len() != 4 * count {
        return Err(Error::Size(format!(
            "VTNSR payload holds {} bytes but shape {:?} needs {}",
            payload.len(),
            shape,
            4 * count
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format("VTNSR payload contains non-finite value".into()));
        }
        data.push(v);
    }
    Tensor::from_vec(&shape, data)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&tensor_to_bytes(t))
        .map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    tensor_from_bytes(&bytes)
}

/// Load a directory of PNG frames as a clip at [`DEFAULT_FPS`].
///
/// Files are taken in ascending filename order (zero-padded indices sort
/// correctly); index gaps are accepted. All frames must share dimensions.
pub fn load_image_sequence(dir: impl AsRef<Path>) -> Result<VideoClip> {
    load_image_sequence_fps(dir, DEFAULT_FPS)
}

pub fn load_image_sequence_fps(dir: impl AsRef<Path>, fps: f32) -> Result<VideoClip> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no PNG frames found in {}",
            dir.display()
        )));
    }

    let mut size: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    for path in &paths {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        match size {
            None => size = Some((w, h)),
            Some(expect) if expect != (w, h) => {
                return Err(Error::Size(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    path.display(),
                    w,
                    h,
                    expect.0,
                    expect.1
                )));
            }
            _ => {}
        }
        data.extend(img.as_raw().iter().map(|&b| b as f32 / 255.0));
    }
    let (w, h) = size.unwrap();
    let frames = Tensor::from_vec(&[paths.len(), h, w, 3], data)?;
    VideoClip::new(frames, fps)
}

/// Write a clip as `frame_%06d.png`, 8-bit RGB, creating `dir` if needed.
pub fn save_image_sequence(clip: &VideoClip, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (clip.height(), clip.width());
    for t in 0..clip.num_frames() {
        let frame = clip.frame(t)?;
        let bytes: Vec<u8> = frame
            .data()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::RgbImage::from_raw(w as u32, h as u32, bytes)
            .expect("frame buffer matches dimensions");
        let path = dir.join(format!("frame_{:06}.png", t));
        img.save(&path)
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    }
    Ok(())
}
