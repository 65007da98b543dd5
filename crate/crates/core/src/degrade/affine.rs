use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DegradeConfig, DegradeError, Intensity};
use crate::trajectory::{Point2, Track};

/// One draw of the centroid-relative affine perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    /// Pixels.
    pub translate_x: f64,
    /// Pixels.
    pub translate_y: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotation_deg: 0.0,
        scale_x: 1.0,
        scale_y: 1.0,
        translate_x: 0.0,
        translate_y: 0.0,
    };

    /// Each component is drawn from the half-open interval `[-m, m)` where `m`
    /// is its configured maximum times the intensity.
    pub fn sample<R: Rng + ?Sized>(intensity: Intensity, cfg: &DegradeConfig, rng: &mut R) -> Self {
        let i = intensity.value();
        let mut symmetric = |m: f64| -m + 2.0 * m * rng.random::<f64>();
        AffineParams {
            rotation_deg: symmetric(cfg.theta_max * i),
            scale_x: 1.0 + symmetric(cfg.delta_scale * i),
            scale_y: 1.0 + symmetric(cfg.delta_scale * i),
            translate_x: symmetric(cfg.delta_trans * i),
            translate_y: symmetric(cfg.delta_trans * i),
        }
    }

    pub fn from_seed(intensity: Intensity, cfg: &DegradeConfig, seed: u64) -> Self {
        AffineParams::sample(intensity, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

pub fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

/// Rotates, then scales per axis, about the pixel-space centroid, then
/// translates. Input and output are normalized coordinates.
pub fn apply_affine(
    track: &Track,
    params: &AffineParams,
    width: u32,
    height: u32,
) -> Result<Track, DegradeError> {
    if track.points.is_empty() {
        return Err(DegradeError::ShortInput { len: 0, min: 1 });
    }
    if width == 0 || height == 0 {
        return Err(DegradeError::Parameter(format!(
            "invalid frame {width}x{height}"
        )));
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let pixels: Vec<Point2> = track
        .points
        .iter()
        .map(|p| Point2::new(p.x * w, p.y * h))
        .collect();
    let c = centroid(&pixels);
    let (sin, cos) = params.rotation_deg.to_radians().sin_cos();
    let points = pixels
        .iter()
        .map(|p| {
            let (dx, dy) = (p.x - c.x, p.y - c.y);
            let rx = cos * dx - sin * dy;
            let ry = sin * dx + cos * dy;
            let x = c.x + params.scale_x * rx + params.translate_x;
            let y = c.y + params.scale_y * ry + params.translate_y;
            Point2::new(x / w, y / h)
        })
        .collect();
    Ok(Track {
        points,
        ..track.clone()
    })
}

pub fn affine_perturb(
    track: &Track,
    intensity: Intensity,
    cfg: &DegradeConfig,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<Track, DegradeError> {
    apply_affine(
        track,
        &AffineParams::from_seed(intensity, cfg, seed),
        width,
        height,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrackKind;

    fn sample_track() -> Track {
        let pts = (0..10)
            .map(|k| Point2::new(0.2 + 0.05 * k as f64, 0.6 - 0.02 * (k * k) as f64 / 10.0))
            .collect();
        Track::new("a", TrackKind::Secondary, 0.5, pts)
    }

    #[test]
    fn zero_intensity_is_identity() {
        let t = sample_track();
        let out =
            affine_perturb(&t, Intensity::ZERO, &DegradeConfig::default(), 512, 384, 77).unwrap();
        for (a, b) in out.points.iter().zip(&t.points) {
            assert!(a.distance(*b) < 1e-9);
        }
    }

    #[test]
    fn centroid_fixed_without_translation() {
        let t = sample_track();
        let cfg = DegradeConfig::default();
        for seed in 0..50 {
            let mut p = AffineParams::from_seed(Intensity::FULL, &cfg, seed);
            p.translate_x = 0.0;
            p.translate_y = 0.0;
            let out = apply_affine(&t, &p, 512, 384).unwrap();
            let (a, b) = (centroid(&t.points), centroid(&out.points));
            assert!((a.x - b.x).abs() * 512.0 < 1e-9 && (a.y - b.y).abs() * 384.0 < 1e-9);
        }
    }

    #[test]
    fn pure_translation_in_pixels() {
        let t = sample_track();
        let p = AffineParams {
            translate_x: 30.0,
            translate_y: -15.0,
            ..AffineParams::IDENTITY
        };
        let out = apply_affine(&t, &p, 300, 150).unwrap();
        for (a, b) in out.points.iter().zip(&t.points) {
            assert!(((a.x - b.x) * 300.0 - 30.0).abs() < 1e-9);
            assert!(((a.y - b.y) * 150.0 + 15.0).abs() < 1e-9);
        }
    }
}
