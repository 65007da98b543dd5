//! Confidence-conditioned trajectory degradation.
//!
//! A track with confidence `s` is corrupted at an intensity `I` drawn from the
//! score: `I = 0` for `s = 1` and `I ~ U[0.1, 1)` for `s = 0.5`. Three stages
//! then run in order, each scaled linearly by `I`:
//!
//! 1. affine perturbation about the track centroid, in pixel space;
//! 2. linearization: keep `K` keypoints and interpolate between them;
//! 3. Savitzky-Golay smoothing with a window that widens with `I`.

mod affine;
pub mod savgol;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Point2, Track};

pub use affine::{affine_perturb, apply_affine, centroid, AffineParams};

/// Added before flooring so products such as `0.1 * 30` that land a hair
/// under an integer do not lose a whole step.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DegradeError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("track of length {len} is too short; at least {min} points are needed")]
    ShortInput { len: usize, min: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeConfig {
    /// Maximum rotation in degrees at full intensity.
    pub theta_max: f64,
    /// Maximum relative per-axis scale change at full intensity.
    pub delta_scale: f64,
    /// Maximum per-axis translation in pixels at full intensity.
    pub delta_trans: f64,
    /// Minimum keypoint count as a fraction of the track length.
    pub l_min_fraction: f64,
    pub w_min: usize,
    pub poly_order: usize,
    /// Intensity range sampled for half-confidence tracks.
    pub intensity_range_low_conf: [f64; 2],
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            theta_max: 5.0,
            delta_scale: 0.2,
            delta_trans: 30.0,
            l_min_fraction: 0.10,
            w_min: 3,
            poly_order: 2,
            intensity_range_low_conf: [0.1, 1.0],
        }
    }
}

impl DegradeConfig {
    pub fn validate(&self) -> Result<(), DegradeError> {
        let bad = |msg: String| Err(DegradeError::Parameter(msg));
        if !(self.theta_max >= 0.0) || !(self.delta_scale >= 0.0) || !(self.delta_trans >= 0.0) {
            return bad("theta_max, delta_scale and delta_trans must be non-negative".into());
        }
        if !(self.l_min_fraction > 0.0 && self.l_min_fraction <= 1.0) {
            return bad(format!(
                "l_min_fraction {} outside (0, 1]",
                self.l_min_fraction
            ));
        }
        if self.w_min < self.poly_order + 1 {
            return bad(format!(
                "w_min {} must be at least poly_order + 1 = {}",
                self.w_min,
                self.poly_order + 1
            ));
        }
        let [lo, hi] = self.intensity_range_low_conf;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!(
                "intensity range [{lo}, {hi}] must lie within [0, 1]"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Intensity(f64);

impl Intensity {
    pub const ZERO: Intensity = Intensity(0.0);
    pub const FULL: Intensity = Intensity(1.0);

    pub fn new(value: f64) -> Result<Self, DegradeError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Intensity(value))
        } else {
            Err(DegradeError::Parameter(format!(
                "intensity {value} outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Intensity {
    type Error = DegradeError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Intensity::new(value)
    }
}

impl From<Intensity> for f64 {
    fn from(i: Intensity) -> f64 {
        i.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for item `index` of a batch.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Per-stage seeds that [`degrade`] derives from its single seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub intensity: u64,
    pub affine: u64,
}

impl StageSeeds {
    pub fn from_seed(seed: u64) -> Self {
        StageSeeds {
            intensity: derive_seed(seed, 1),
            affine: derive_seed(seed, 2),
        }
    }
}

/// `s = 1` gives zero intensity; `s = 0.5` draws uniformly from the configured
/// range. Other scores scale the draw by `(1 - s) / 0.5` and clamp to `[0, 1]`;
/// that generalization has no counterpart in the binary training regime.
pub fn intensity_for_score(s: f64, cfg: &DegradeConfig, seed: u64) -> Intensity {
    let s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
    if s >= 1.0 {
        return Intensity::ZERO;
    }
    let [lo, hi] = cfg.intensity_range_low_conf;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = lo + (hi - lo) * rng.random::<f64>();
    let scale = if s == 0.5 { 1.0 } else { (1.0 - s) / 0.5 };
    Intensity((draw * scale).clamp(0.0, 1.0))
}

/// `K = floor(L - (L - L_min) * I)` with `L_min = l_min_fraction * L`, kept in `[2, L]`.
pub fn keypoint_count(
    len: usize,
    intensity: Intensity,
    l_min_fraction: f64,
) -> Result<usize, DegradeError> {
    if len < 2 {
        return Err(DegradeError::ShortInput { len, min: 2 });
    }
    let l = len as f64;
    let l_min = l_min_fraction * l;
    let k = (l - (l - l_min) * intensity.value() + FLOOR_EPS).floor() as usize;
    Ok(k.clamp(2, len))
}

/// Keypoint indices spaced uniformly over `0..len` with both endpoints,
/// rounded half up.
pub fn keypoint_indices(len: usize, count: usize) -> Vec<usize> {
    debug_assert!(count >= 2 && count <= len);
    let span = len - 1;
    let gaps = count - 1;
    (0..count)
        .map(|j| (2 * j * span + gaps) / (2 * gaps))
        .collect()
}

/// Reconstructs the track by linear interpolation between `count` keypoints.
pub fn linearize_with_keypoints(track: &Track, count: usize) -> Result<Track, DegradeError> {
    let len = track.points.len();
    if len < 2 {
        return Err(DegradeError::ShortInput { len, min: 2 });
    }
    if count < 2 || count > len {
        return Err(DegradeError::Parameter(format!(
            "keypoint count {count} outside [2, {len}]"
        )));
    }
    let keys = keypoint_indices(len, count);
    let src = &track.points;
    let mut points = src.clone();
    for pair in keys.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = (b - a) as f64;
        for (i, slot) in points.iter_mut().enumerate().take(b).skip(a + 1) {
            *slot = src[a].lerp(src[b], (i - a) as f64 / span);
        }
    }
    Ok(Track {
        points,
        ..track.clone()
    })
}

pub fn linearize(
    track: &Track,
    intensity: Intensity,
    cfg: &DegradeConfig,
) -> Result<Track, DegradeError> {
    let k = keypoint_count(track.points.len(), intensity, cfg.l_min_fraction)?;
    linearize_with_keypoints(track, k)
}

/// `W = floor(W_min + (L/2 - W_min) * I)`, moved down to an odd value and
/// kept at or above the smallest odd window the polynomial order allows.
pub fn savgol_window(
    len: usize,
    intensity: Intensity,
    cfg: &DegradeConfig,
) -> Result<usize, DegradeError> {
    let floor_w = cfg.w_min.max(cfg.poly_order + 1);
    let min_valid = floor_w | 1;
    if min_valid > len {
        return Err(DegradeError::ShortInput {
            len,
            min: min_valid,
        });
    }
    let w_min = cfg.w_min as f64;
    let w_max = len as f64 / 2.0;
    let raw = (w_min + (w_max - w_min) * intensity.value() + FLOOR_EPS)
        .floor()
        .max(0.0) as usize;
    let odd = if raw.is_multiple_of(2) {
        raw.saturating_sub(1)
    } else {
        raw
    };
    let max_valid = if len.is_multiple_of(2) { len - 1 } else { len };
    Ok(odd.max(min_valid).min(max_valid))
}

pub fn savgol_smooth(
    track: &Track,
    window: usize,
    poly_order: usize,
) -> Result<Track, DegradeError> {
    let xs: Vec<f64> = track.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = track.points.iter().map(|p| p.y).collect();
    let xs = savgol::filter(&xs, window, poly_order)?;
    let ys = savgol::filter(&ys, window, poly_order)?;
    Ok(Track {
        points: xs
            .into_iter()
            .zip(ys)
            .map(|(x, y)| Point2::new(x, y))
            .collect(),
        ..track.clone()
    })
}

/// Runs the full pipeline on one track. `width` and `height` give the pixel
/// frame the normalized coordinates refer to.
pub fn degrade(
    track: &Track,
    s: f64,
    cfg: &DegradeConfig,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<(Track, Intensity), DegradeError> {
    cfg.validate()?;
    let seeds = StageSeeds::from_seed(seed);
    let intensity = intensity_for_score(s, cfg, seeds.intensity);
    if intensity.value() == 0.0 {
        return Ok((track.clone(), intensity));
    }
    let perturbed = affine_perturb(track, intensity, cfg, width, height, seeds.affine)?;
    let linear = linearize(&perturbed, intensity, cfg)?;
    let window = savgol_window(linear.points.len(), intensity, cfg)?;
    let smooth = savgol_smooth(&linear, window, cfg.poly_order)?;
    Ok((smooth, intensity))
}
