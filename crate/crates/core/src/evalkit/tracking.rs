use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::trajectory::{normalize_points, Point2, Track, TrackKind, TrajectorySet};

/// Mean Euclidean pixel distance over every (track, frame) pair. Tracks are
/// matched by id; both sets must share dimensions, length and track count.
pub fn epe(reference: &TrajectorySet, estimated: &TrajectorySet) -> Result<f64, EvalError> {
    if reference.width != estimated.width || reference.height != estimated.height {
        return Err(EvalError::Shape(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            reference.width, reference.height, estimated.width, estimated.height
        )));
    }
    if reference.length != estimated.length {
        return Err(EvalError::Shape(format!(
            "lengths differ: {} vs {}",
            reference.length, estimated.length
        )));
    }
    if reference.tracks.len() != estimated.tracks.len() {
        return Err(EvalError::Shape(format!(
            "track counts differ: {} vs {}",
            reference.tracks.len(),
            estimated.tracks.len()
        )));
    }
    if reference.tracks.is_empty() {
        return Err(EvalError::Shape("no tracks to compare".into()));
    }
    let (w, h) = (f64::from(reference.width), f64::from(reference.height));
    let mut total = 0.0;
    let mut count = 0usize;
    for r in &reference.tracks {
        let e = estimated
            .track(&r.id)
            .ok_or_else(|| EvalError::Shape(format!("track `{}` missing from estimate", r.id)))?;
        if r.points.len() != e.points.len() {
            return Err(EvalError::Shape(format!("track `{}` lengths differ", r.id)));
        }
        for (a, b) in r.points.iter().zip(&e.points) {
            total += ((a.x - b.x) * w).hypot((a.y - b.y) * h);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Pixels searched around the previous position.
    pub search_radius: f64,
    /// Replace the brightest pixel by the intensity-weighted centroid of the
    /// bright pixels around it (sub-pixel estimate of a blob centre).
    pub refine: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            search_radius: 8.0,
            refine: true,
        }
    }
}

fn window(center: Point2, radius: f64, w: u32, h: u32) -> impl Iterator<Item = (u32, u32, f64)> {
    let c0 = (center.x - radius).ceil().max(0.0) as i64;
    let c1 = (center.x + radius).floor().min(f64::from(w) - 1.0) as i64;
    let r0 = (center.y - radius).ceil().max(0.0) as i64;
    let r1 = (center.y + radius).floor().min(f64::from(h) - 1.0) as i64;
    (r0..=r1).flat_map(move |row| {
        (c0..=c1).filter_map(move |col| {
            let d_sq = (col as f64 - center.x).powi(2) + (row as f64 - center.y).powi(2);
            (d_sq <= radius * radius).then_some((col as u32, row as u32, d_sq))
        })
    })
}

/// Brightest pixel within `radius` of `prev`; ties go to the smallest
/// displacement, then to row-major order. `None` if the window is black.
fn brightest(frame: &GrayImage, prev: Point2, radius: f64) -> Option<(u32, u32, u8)> {
    let mut best: Option<(u8, f64, u32, u32)> = None;
    for (col, row, d_sq) in window(prev, radius, frame.width(), frame.height()) {
        let v = frame.get_pixel(col, row).0[0];
        if v == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bv, bd, br, bc)) => {
                v > bv || (v == bv && (d_sq < bd || (d_sq == bd && (row, col) < (br, bc))))
            }
        };
        if better {
            best = Some((v, d_sq, row, col));
        }
    }
    best.map(|(v, _, row, col)| (col, row, v))
}

fn bright_centroid(frame: &GrayImage, seed: Point2, peak: u8, radius: f64) -> Point2 {
    let threshold = f64::from(peak) / 2.0;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (col, row, _) in window(seed, radius, frame.width(), frame.height()) {
        let v = f64::from(frame.get_pixel(col, row).0[0]);
        if v >= threshold {
            sw += v;
            sx += v * f64::from(col);
            sy += v * f64::from(row);
        }
    }
    Point2::new(sx / sw, sy / sw)
}

/// Follows each initial pixel position through the video. Output tracks are
/// named `track_<i>` and normalized to the frame size.
pub fn track_bright_points(
    video: &[GrayImage],
    init: &[Point2],
    cfg: &TrackerConfig,
) -> Result<TrajectorySet, EvalError> {
    let first = video.first().ok_or(EvalError::EmptyVideo)?;
    let (w, h) = first.dimensions();
    if video.iter().any(|f| f.dimensions() != (w, h)) {
        return Err(EvalError::Shape("frames differ in size".into()));
    }
    let mut paths: Vec<Vec<Point2>> = init
        .iter()
        .map(|_| Vec::with_capacity(video.len()))
        .collect();
    let mut current: Vec<Point2> = init.to_vec();
    for frame in video {
        for (pos, path) in current.iter_mut().zip(paths.iter_mut()) {
            if let Some((col, row, v)) = brightest(frame, *pos, cfg.search_radius) {
                let seed = Point2::new(f64::from(col), f64::from(row));
                *pos = if cfg.refine {
                    bright_centroid(frame, seed, v, cfg.search_radius)
                } else {
                    seed
                };
            }
            path.push(*pos);
        }
    }
    let tracks = paths
        .into_iter()
        .enumerate()
        .map(|(i, pixels)| {
            let points = normalize_points(&pixels, w, h).expect("frame has non-zero size");
            Track::new(format!("track_{i}"), TrackKind::Secondary, 1.0, points)
        })
        .collect();
    Ok(TrajectorySet::new(w, h, video.len()).with_tracks(tracks))
}

/// Tracks `reference`'s first-frame positions through `video` and returns an
/// estimate carrying the reference's ids, kinds and confidences.
pub fn track_like(
    video: &[GrayImage],
    reference: &TrajectorySet,
    cfg: &TrackerConfig,
) -> Result<TrajectorySet, EvalError> {
    let (w, h) = (f64::from(reference.width), f64::from(reference.height));
    let init: Vec<Point2> = reference
        .tracks
        .iter()
        .map(|t| {
            t.points
                .first()
                .map_or(Point2::default(), |p| Point2::new(p.x * w, p.y * h))
        })
        .collect();
    let mut est = track_bright_points(video, &init, cfg)?;
    for (e, r) in est.tracks.iter_mut().zip(&reference.tracks) {
        e.id.clone_from(&r.id);
        e.kind = r.kind;
        e.confidence = r.confidence;
    }
    est.fps = reference.fps;
    Ok(est)
}
