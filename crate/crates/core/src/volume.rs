//! Confidence-scaled Gaussian motion volumes.
//!
//! Each track contributes, in every frame, a Gaussian splat centred on its
//! (real-valued) pixel position with peak equal to the track confidence.
//! Overlapping splats combine by element-wise maximum, so every voxel stays in
//! `[0, 1]`. The single-channel map is duplicated into three channels.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Point2, TrajectorySet};

pub const MAGIC: &[u8; 4] = b"MVOL";
pub const FORMAT_VERSION: u32 = 1;
pub const CHANNELS: usize = 3;
/// Bytes before the payload: magic, version, four dimensions, dtype and padding.
pub const HEADER_LEN: usize = 28;
const DTYPE_F32_LE: u8 = 0;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid dimensions: height {height}, width {width}")]
    Dimension { height: usize, width: usize },
    #[error("volume format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaConfig {
    /// Gaussian standard deviation as a fraction of `min(height, width)`.
    pub sigma_fraction: f64,
    /// Kernel support radius in units of sigma.
    pub truncation_radius_sigmas: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            sigma_fraction: 0.01,
            truncation_radius_sigmas: 3.0,
        }
    }
}

impl SigmaConfig {
    pub fn validate(&self) -> Result<(), VolumeError> {
        if !(self.sigma_fraction.is_finite() && self.sigma_fraction > 0.0) {
            return Err(VolumeError::Parameter(format!(
                "sigma_fraction must be positive, got {}",
                self.sigma_fraction
            )));
        }
        if !(self.truncation_radius_sigmas >= 1.0) {
            return Err(VolumeError::Parameter(format!(
                "truncation_radius_sigmas must be at least 1, got {}",
                self.truncation_radius_sigmas
            )));
        }
        Ok(())
    }

    pub fn sigma_px(&self, height: usize, width: usize) -> f64 {
        self.sigma_fraction * height.min(width) as f64
    }
}

/// Dense `[frame][row][col][channel]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionVolume {
    length: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl MotionVolume {
    pub fn zeros(length: usize, height: usize, width: usize) -> Self {
        MotionVolume {
            length,
            height,
            width,
            data: vec![0.0; length * height * width * CHANNELS],
        }
    }

    /// Builds a volume from raw data, checking the shape and value range.
    pub fn from_data(
        length: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        let expected = shape_len(length, height, width)
            .ok_or_else(|| VolumeError::Format("dimension product overflows".into()))?;
        if data.len() != expected {
            return Err(VolumeError::Format(format!(
                "data length {} does not match shape ({expected})",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(VolumeError::Format(format!(
                "value {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(MotionVolume {
            length,
            height,
            width,
            data,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn index(&self, frame: usize, row: usize, col: usize, channel: usize) -> usize {
        ((frame * self.height + row) * self.width + col) * CHANNELS + channel
    }

    pub fn get(&self, frame: usize, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(frame, row, col, channel)]
    }

    /// Channel-0 map of one frame, row-major.
    pub fn frame_map(&self, frame: usize) -> Vec<f32> {
        let start = self.index(frame, 0, 0, 0);
        self.data[start..start + self.height * self.width * CHANNELS]
            .chunks_exact(CHANNELS)
            .map(|c| c[0])
            .collect()
    }

    pub fn channels_identical(&self) -> bool {
        self.data
            .chunks_exact(CHANNELS)
            .all(|c| c[0].to_bits() == c[1].to_bits() && c[1].to_bits() == c[2].to_bits())
    }

    pub fn values_in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

fn shape_len(length: usize, height: usize, width: usize) -> Option<usize> {
    length
        .checked_mul(height)?
        .checked_mul(width)?
        .checked_mul(CHANNELS)
}

pub fn kernel_value(d_sq: f64, sigma: f64) -> Result<f64, VolumeError> {
    if !(sigma > 0.0) {
        return Err(VolumeError::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok((-d_sq / (2.0 * sigma * sigma)).exp())
}

/// Splats one Gaussian of the given peak into a single-channel frame map (MAX combine).
fn splat(
    map: &mut [f64],
    height: usize,
    width: usize,
    center: Point2,
    peak: f64,
    sigma: f64,
    radius: f64,
) {
    if peak <= 0.0 {
        return;
    }
    let r_sq = radius * radius;
    let col_lo = (center.x - radius).ceil().max(0.0);
    let col_hi = (center.x + radius).floor().min(width as f64 - 1.0);
    let row_lo = (center.y - radius).ceil().max(0.0);
    let row_hi = (center.y + radius).floor().min(height as f64 - 1.0);
    if col_lo > col_hi || row_lo > row_hi {
        return;
    }
    let two_sigma_sq = 2.0 * sigma * sigma;
    for row in row_lo as usize..=row_hi as usize {
        let dy = row as f64 - center.y;
        for col in col_lo as usize..=col_hi as usize {
            let dx = col as f64 - center.x;
            let d_sq = dx * dx + dy * dy;
            if d_sq > r_sq {
                continue;
            }
            let v = peak * (-d_sq / two_sigma_sq).exp();
            let cell = &mut map[row * width + col];
            if v > *cell {
                *cell = v;
            }
        }
    }
}

/// Rasterizes a trajectory set at `height x width`. Normalized track
/// coordinates are mapped to pixel positions `(x * width, y * height)`.
pub fn rasterize(
    set: &TrajectorySet,
    height: usize,
    width: usize,
    cfg: &SigmaConfig,
) -> Result<MotionVolume, VolumeError> {
    if height < 1 || width < 1 {
        return Err(VolumeError::Dimension { height, width });
    }
    cfg.validate()?;
    let sigma = cfg.sigma_px(height, width);
    let radius = cfg.truncation_radius_sigmas * sigma;
    let length = set.length;
    let mut volume = MotionVolume::zeros(length, height, width);
    let mut map = vec![0.0f64; height * width];
    for frame in 0..length {
        map.iter_mut().for_each(|v| *v = 0.0);
        for track in &set.tracks {
            let Some(p) = track.points.get(frame) else {
                continue;
            };
            let center = Point2::new(p.x * width as f64, p.y * height as f64);
            splat(
                &mut map,
                height,
                width,
                center,
                track.confidence.clamp(0.0, 1.0),
                sigma,
                radius,
            );
        }
        let start = volume.index(frame, 0, 0, 0);
        let out = &mut volume.data[start..start + height * width * CHANNELS];
        for (cell, &v) in out.chunks_exact_mut(CHANNELS).zip(&map) {
            cell.fill(v as f32);
        }
    }
    Ok(volume)
}

pub fn write_volume(v: &MotionVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + v.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [v.length, v.height, v.width, CHANNELS] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.push(DTYPE_F32_LE);
    out.extend_from_slice(&[0, 0, 0]);
    for value in &v.data {
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn read_volume(bytes: &[u8]) -> Result<MotionVolume, VolumeError> {
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::Format(format!(
            "header truncated: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(VolumeError::Format("bad magic".into()));
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(VolumeError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let [length, height, width, channels] = [8, 12, 16, 20].map(|at| read_u32(bytes, at) as usize);
    if channels != CHANNELS {
        return Err(VolumeError::Format(format!(
            "expected {CHANNELS} channels, found {channels}"
        )));
    }
    if bytes[24] != DTYPE_F32_LE {
        return Err(VolumeError::Format(format!(
            "unknown dtype code {}",
            bytes[24]
        )));
    }
    if bytes[25..28] != [0, 0, 0] {
        return Err(VolumeError::Format(
            "reserved header bytes are not zero".into(),
        ));
    }
    let count = shape_len(length, height, width)
        .ok_or_else(|| VolumeError::Format("dimension product overflows".into()))?;
    let payload_len = count
        .checked_mul(4)
        .ok_or_else(|| VolumeError::Format("dimension product overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != payload_len {
        return Err(VolumeError::Format(format!(
            "payload is {} bytes, shape requires {payload_len}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MotionVolume::from_data(length, height, width, data)
}

/// 8-bit quantization, round half up.
pub fn quantize(v: f32) -> u8 {
    (f64::from(v).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn frame_image(v: &MotionVolume, frame: usize) -> GrayImage {
    let map = v.frame_map(frame);
    GrayImage::from_fn(v.width as u32, v.height as u32, |x, y| {
        Luma([quantize(map[y as usize * v.width + x as usize])])
    })
}

pub fn frame_file_name(frame: usize, total: usize) -> String {
    let digits = total.saturating_sub(1).to_string().len().max(4);
    format!("frame_{frame:0digits$}.png")
}

/// Writes one grayscale PNG per frame into `dir`, returning the written paths.
pub fn export_frames_png(v: &MotionVolume, dir: &Path) -> Result<Vec<PathBuf>, VolumeError> {
    fs::create_dir_all(dir)?;
    (0..v.length)
        .map(|frame| {
            let path = dir.join(frame_file_name(frame, v.length));
            frame_image(v, frame).save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Deterministic stand-in for a video generator: black frames with one
/// filled white disc per track at that frame's pixel position.
pub fn render_preview_video(
    set: &TrajectorySet,
    height: usize,
    width: usize,
    dot_radius: f64,
) -> Result<Vec<GrayImage>, VolumeError> {
    if height < 1 || width < 1 {
        return Err(VolumeError::Dimension { height, width });
    }
    if !(dot_radius >= 0.0) {
        return Err(VolumeError::Parameter(format!(
            "dot radius must be non-negative, got {dot_radius}"
        )));
    }
    let r_sq = dot_radius * dot_radius;
    let frames = (0..set.length)
        .map(|frame| {
            let mut img = GrayImage::new(width as u32, height as u32);
            for track in &set.tracks {
                let Some(p) = track.points.get(frame) else {
                    continue;
                };
                let (cx, cy) = (p.x * width as f64, p.y * height as f64);
                let col_lo = (cx - dot_radius).ceil().max(0.0) as i64;
                let col_hi = (cx + dot_radius).floor().min(width as f64 - 1.0) as i64;
                let row_lo = (cy - dot_radius).ceil().max(0.0) as i64;
                let row_hi = (cy + dot_radius).floor().min(height as f64 - 1.0) as i64;
                for row in row_lo..=row_hi {
                    for col in col_lo..=col_hi {
                        let (dx, dy) = (col as f64 - cx, row as f64 - cy);
                        if dx * dx + dy * dy <= r_sq {
                            img.put_pixel(col as u32, row as u32, Luma([255]));
                        }
                    }
                }
            }
            img
        })
        .collect();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Track, TrackKind};

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_value(0.0, 2.0).unwrap(), 1.0);
        assert!(approx(kernel_value(4.0, 2.0).unwrap(), 0.606531, 1e-6));
        for sigma in [0.5, 2.0, 7.3] {
            assert!(approx(
                kernel_value(9.0 * sigma * sigma, sigma).unwrap(),
                0.011109,
                1e-6
            ));
        }
        assert!(kernel_value(1.0, 0.0).is_err());
        assert!(kernel_value(1.0, -1.0).is_err());
    }

    fn static_set(px: f64, py: f64, size: u32, len: usize, conf: f64) -> TrajectorySet {
        let p = Point2::new(px / f64::from(size), py / f64::from(size));
        TrajectorySet::new(size, size, len).with_tracks(vec![Track::fixed("s", p, len, conf)])
    }

    #[test]
    fn static_peak_equals_confidence() {
        let cfg = SigmaConfig::default();
        let v = rasterize(&static_set(32.0, 16.0, 64, 8, 1.0), 64, 64, &cfg).unwrap();
        for l in 0..8 {
            for c in 0..3 {
                assert_eq!(v.get(l, 16, 32, c), 1.0);
            }
        }
        let half = rasterize(&static_set(32.0, 16.0, 64, 8, 0.5), 64, 64, &cfg).unwrap();
        assert_eq!(half.get(3, 16, 32, 0), 0.5);
    }

    #[test]
    fn rasterize_rejects_bad_dims() {
        let set = static_set(1.0, 1.0, 4, 1, 1.0);
        assert!(matches!(
            rasterize(&set, 0, 4, &SigmaConfig::default()),
            Err(VolumeError::Dimension { .. })
        ));
        let cfg = SigmaConfig {
            sigma_fraction: 0.0,
            ..SigmaConfig::default()
        };
        assert!(rasterize(&set, 4, 4, &cfg).is_err());
    }

    #[test]
    fn out_of_frame_point_keeps_in_bounds_tail() {
        let cfg = SigmaConfig {
            sigma_fraction: 0.1,
            truncation_radius_sigmas: 3.0,
        };
        // sigma = 3.2 px at 32x32; centre one pixel left of the frame.
        let set = TrajectorySet::new(32, 32, 1).with_tracks(vec![Track::fixed(
            "edge",
            Point2::new(-1.0 / 32.0, 0.5),
            1,
            1.0,
        )]);
        let v = rasterize(&set, 32, 32, &cfg).unwrap();
        let expected = kernel_value(1.0, 3.2).unwrap() as f32;
        assert_eq!(v.get(0, 16, 0, 0), expected);
        let far = TrajectorySet::new(32, 32, 1).with_tracks(vec![Track::fixed(
            "far",
            Point2::new(-1.0, 0.5),
            1,
            1.0,
        )]);
        assert!(rasterize(&far, 32, 32, &cfg)
            .unwrap()
            .data()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn volume_header_and_sizes() {
        let v = MotionVolume::zeros(1, 1, 1);
        let bytes = write_volume(&v);
        assert_eq!(bytes.len(), HEADER_LEN + 12);
        assert_eq!(&bytes[..4], b"MVOL");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &3u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &[0, 0, 0, 0]);
        assert_eq!(read_volume(&bytes).unwrap(), v);
    }

    #[test]
    fn read_rejects_corruption() {
        let mut bytes = write_volume(&MotionVolume::zeros(2, 3, 4));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_volume(&bad), Err(VolumeError::Format(m)) if m == "bad magic"));
        bytes.pop();
        assert!(matches!(read_volume(&bytes), Err(VolumeError::Format(_))));
        assert!(read_volume(&bytes[..10]).is_err());

        let mut huge = write_volume(&MotionVolume::zeros(1, 1, 1));
        for at in [8, 12, 16] {
            huge[at..at + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(read_volume(&huge), Err(VolumeError::Format(_))));
    }

    #[test]
    fn quantization() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn export_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let zero = MotionVolume::zeros(3, 4, 5);
        let paths = export_frames_png(&zero, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths[2].ends_with("frame_0002.png"));
        let img = image::open(&paths[1]).unwrap().to_luma8();
        assert!(img.pixels().all(|p| p.0[0] == 0));

        let v = rasterize(
            &static_set(2.0, 1.0, 4, 1, 1.0),
            4,
            4,
            &SigmaConfig::default(),
        )
        .unwrap();
        let img = frame_image(&v, 0);
        assert_eq!(img.get_pixel(2, 1).0[0], 255);
    }

    #[test]
    fn frame_names_pad_to_length() {
        assert_eq!(frame_file_name(7, 12), "frame_0007.png");
        assert_eq!(frame_file_name(7, 100_001), "frame_000007.png");
    }

    #[test]
    fn preview_draws_one_disc_per_frame() {
        let points = (0..6)
            .map(|i| Point2::new(0.2 + 0.1 * i as f64, 0.5))
            .collect();
        let set = TrajectorySet::new(40, 40, 6).with_tracks(vec![Track::new(
            "m",
            TrackKind::User,
            1.0,
            points,
        )]);
        let frames = render_preview_video(&set, 40, 40, 2.5).unwrap();
        assert_eq!(frames.len(), 6);
        for (i, f) in frames.iter().enumerate() {
            let cx = (8 + 4 * i) as u32;
            assert_eq!(f.get_pixel(cx, 20).0[0], 255);
            let lit = f.pixels().filter(|p| p.0[0] == 255).count();
            // 5x5 block minus its corners.
            assert_eq!(lit, 21);
        }
    }
}
