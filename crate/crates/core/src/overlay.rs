//! Hard-edged trajectory overlays: a polyline per track, a disc at its first
//! point and an arrowhead along its final segment. Static tracks are drawn
//! as a disc only.

use std::collections::BTreeMap;
use std::io::Cursor;

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Point2, TrackKind, TrajectorySet};

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("image is {image_w}x{image_h} but the trajectory set is {set_w}x{set_h}")]
    DimensionMismatch {
        image_w: u32,
        image_h: u32,
        set_w: u32,
        set_h: u32,
    },
    #[error("invalid style: {0}")]
    Style(String),
    #[error("png encoding failed: {0}")]
    Encode(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayStyle {
    pub color_by_kind: BTreeMap<TrackKind, [u8; 3]>,
    pub line_width: f64,
    pub point_radius: f64,
    pub arrow_head_len: f64,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        let color_by_kind = BTreeMap::from([
            (TrackKind::User, [0, 255, 0]),
            (TrackKind::RefinedUser, [255, 0, 0]),
            (TrackKind::Secondary, [0, 0, 255]),
            (TrackKind::Static, [0, 0, 255]),
        ]);
        OverlayStyle {
            color_by_kind,
            line_width: 3.0,
            point_radius: 4.0,
            arrow_head_len: 10.0,
        }
    }
}

impl OverlayStyle {
    pub fn validate(&self) -> Result<(), OverlayError> {
        for (name, v) in [
            ("line_width", self.line_width),
            ("point_radius", self.point_radius),
            ("arrow_head_len", self.arrow_head_len),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(OverlayError::Style(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn color(&self, kind: TrackKind) -> Rgb<u8> {
        Rgb(self
            .color_by_kind
            .get(&kind)
            .copied()
            .unwrap_or([255, 255, 255]))
    }

    /// Distance from the track polyline beyond which no pixel is touched.
    pub fn envelope_radius(&self) -> f64 {
        (self.line_width / 2.0)
            .max(self.point_radius)
            .max(self.arrow_head_len)
    }
}

/// Pixel rows/cols whose centres fall in `[lo, hi]`, clipped to the image.
fn pixel_span(lo: f64, hi: f64, size: u32) -> Option<(u32, u32)> {
    let a = lo.ceil().max(0.0);
    let b = hi.floor().min(f64::from(size) - 1.0);
    (a <= b).then_some((a as u32, b as u32))
}

fn fill_where(
    img: &mut RgbImage,
    bbox: (f64, f64, f64, f64),
    color: Rgb<u8>,
    inside: impl Fn(f64, f64) -> bool,
) {
    let (x0, y0, x1, y1) = bbox;
    let (Some((c0, c1)), Some((r0, r1))) = (
        pixel_span(x0, x1, img.width()),
        pixel_span(y0, y1, img.height()),
    ) else {
        return;
    };
    for row in r0..=r1 {
        for col in c0..=c1 {
            if inside(f64::from(col), f64::from(row)) {
                img.put_pixel(col, row, color);
            }
        }
    }
}

fn segment_dist_sq(px: f64, py: f64, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((px - a.x) * dx + (py - a.y) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.x + t * dx - px, a.y + t * dy - py);
    qx * qx + qy * qy
}

fn draw_segment(img: &mut RgbImage, a: Point2, b: Point2, width: f64, color: Rgb<u8>) {
    let r = width / 2.0;
    let bbox = (
        a.x.min(b.x) - r,
        a.y.min(b.y) - r,
        a.x.max(b.x) + r,
        a.y.max(b.y) + r,
    );
    fill_where(img, bbox, color, |x, y| {
        segment_dist_sq(x, y, a, b) <= r * r
    });
}

fn draw_disc(img: &mut RgbImage, c: Point2, r: f64, color: Rgb<u8>) {
    fill_where(img, (c.x - r, c.y - r, c.x + r, c.y + r), color, |x, y| {
        (x - c.x).powi(2) + (y - c.y).powi(2) <= r * r
    });
}

fn draw_arrowhead(img: &mut RgbImage, tip: Point2, from: Point2, len: f64, color: Rgb<u8>) {
    let (dx, dy) = (tip.x - from.x, tip.y - from.y);
    let norm = dx.hypot(dy);
    let (ux, uy) = (dx / norm, dy / norm);
    let half = len * 0.5;
    let base = Point2::new(tip.x - ux * len, tip.y - uy * len);
    let left = Point2::new(base.x - uy * half, base.y + ux * half);
    let right = Point2::new(base.x + uy * half, base.y - ux * half);
    let tri = [tip, left, right];
    let edge =
        |p: Point2, q: Point2, x: f64, y: f64| (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
    let bbox = (
        tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
        tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
        tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
    );
    fill_where(img, bbox, color, |x, y| {
        let e = [
            edge(tri[0], tri[1], x, y),
            edge(tri[1], tri[2], x, y),
            edge(tri[2], tri[0], x, y),
        ];
        e.iter().all(|&v| v >= 0.0) || e.iter().all(|&v| v <= 0.0)
    });
}

/// Returns a copy of `image` with the set's tracks drawn on it.
pub fn draw_overlay(
    image: &RgbImage,
    set: &TrajectorySet,
    style: &OverlayStyle,
) -> Result<RgbImage, OverlayError> {
    if image.width() != set.width || image.height() != set.height {
        return Err(OverlayError::DimensionMismatch {
            image_w: image.width(),
            image_h: image.height(),
            set_w: set.width,
            set_h: set.height,
        });
    }
    style.validate()?;
    let mut out = image.clone();
    for (track, pixels) in set.tracks.iter().zip(set.pixel_tracks()) {
        let color = style.color(track.kind);
        let Some(&first) = pixels.first() else {
            continue;
        };
        let last = *pixels.last().unwrap();
        // Direction of the final non-degenerate segment, if the track moves at all.
        let from = pixels.iter().rev().find(|p| **p != last).copied();
        if track.kind == TrackKind::Static || from.is_none() {
            draw_disc(&mut out, first, style.point_radius, color);
            continue;
        }
        for pair in pixels.windows(2) {
            draw_segment(&mut out, pair[0], pair[1], style.line_width, color);
        }
        draw_disc(&mut out, first, style.point_radius, color);
        draw_arrowhead(&mut out, last, from.unwrap(), style.arrow_head_len, color);
    }
    Ok(out)
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, OverlayError> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new(&mut buf).write_image(
        image.as_raw(),
        image.width(),
        image.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(buf.into_inner())
}

/// The overlay as PNG bytes, as sent to a vision-language model.
pub fn compose_vlm_image(
    image: &RgbImage,
    set: &TrajectorySet,
    style: &OverlayStyle,
) -> Result<Vec<u8>, OverlayError> {
    encode_png(&draw_overlay(image, set, style)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Track;

    fn canvas(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 2) as u8, (y * 2) as u8, 40]))
    }

    #[test]
    fn empty_set_is_noop() {
        let img = canvas(50, 40);
        let out = draw_overlay(
            &img,
            &TrajectorySet::new(50, 40, 3),
            &OverlayStyle::default(),
        )
        .unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn static_track_is_single_disc() {
        let img = RgbImage::new(60, 60);
        let set = TrajectorySet::new(60, 60, 5).with_tracks(vec![Track::fixed(
            "pin",
            Point2::new(0.5, 0.5),
            5,
            0.5,
        )]);
        let style = OverlayStyle::default();
        let out = draw_overlay(&img, &set, &style).unwrap();
        let r = style.point_radius;
        for (x, y, p) in out.enumerate_pixels() {
            let inside = (f64::from(x) - 30.0).powi(2) + (f64::from(y) - 30.0).powi(2) <= r * r;
            assert_eq!(p.0 != [0, 0, 0], inside, "pixel ({x}, {y})");
            if inside {
                assert_eq!(p.0, [0, 0, 255]);
            }
        }
    }

    #[test]
    fn horizontal_track_arrow_points_right() {
        let img = RgbImage::new(100, 100);
        let pts = vec![Point2::new(0.2, 0.5), Point2::new(0.8, 0.5)];
        let set = TrajectorySet::new(100, 100, 2).with_tracks(vec![Track::new(
            "u",
            TrackKind::User,
            1.0,
            pts,
        )]);
        let out = draw_overlay(&img, &set, &OverlayStyle::default()).unwrap();
        let green = [0, 255, 0];
        // Behind the tip the head is wider than the line; ahead of it nothing is drawn.
        assert_eq!(out.get_pixel(73, 47).0, green);
        assert_eq!(out.get_pixel(73, 53).0, green);
        assert_eq!(out.get_pixel(87, 47).0, [0, 0, 0]);
        assert_eq!(out.get_pixel(87, 53).0, [0, 0, 0]);
        assert_eq!(out.get_pixel(82, 50).0, [0, 0, 0]);
        assert_eq!(out.get_pixel(80, 50).0, green);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = RgbImage::new(10, 10);
        assert!(matches!(
            draw_overlay(
                &img,
                &TrajectorySet::new(10, 11, 1),
                &OverlayStyle::default()
            ),
            Err(OverlayError::DimensionMismatch { .. })
        ));
    }
}
