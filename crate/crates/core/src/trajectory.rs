//! Trajectory data model shared by every other module.
//!
//! Coordinates are normalized to the image: `x = 0` is the left edge, `x = 1`
//! the right edge, `y = 0` the top edge and `y = 1` the bottom edge. Points
//! outside `[0, 1]` are legal and describe off-frame positions.

use std::fmt::Write as _;
use std::sync::LazyLock;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Manifest schema version written by [`serialize_manifest`].
pub const MANIFEST_VERSION: u32 = 1;

/// Default frame rate of a trajectory set.
pub const DEFAULT_FPS: f64 = 4.0;

const STATIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid dimensions {width}x{height}: both must be at least 1")]
    Dimension { width: u32, height: u32 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("manifest parse error at `{field}`: {message}")]
    Manifest { field: String, message: String },
    #[error("line {line}: {message}")]
    TrackText { line: usize, message: String },
    #[error("invalid sample range [{low}, {high}]")]
    SampleRange { low: usize, high: usize },
}

impl TrajectoryError {
    fn manifest(field: impl Into<String>, message: impl Into<String>) -> Self {
        TrajectoryError::Manifest {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    User,
    RefinedUser,
    Secondary,
    Static,
}

impl TrackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackKind::User => "user",
            TrackKind::RefinedUser => "refined_user",
            TrackKind::Secondary => "secondary",
            TrackKind::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<TrackKind> {
        match s {
            "user" => Some(TrackKind::User),
            "refined_user" => Some(TrackKind::RefinedUser),
            "secondary" => Some(TrackKind::Secondary),
            "static" => Some(TrackKind::Static),
            _ => None,
        }
    }

    /// User intent (original or refined) as opposed to model-proposed tracks.
    pub fn is_user(self) -> bool {
        matches!(self, TrackKind::User | TrackKind::RefinedUser)
    }

    /// Confidence assigned when a source does not state one.
    pub fn default_confidence(self) -> f64 {
        if self.is_user() {
            1.0
        } else {
            0.5
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub kind: TrackKind,
    pub confidence: f64,
    pub points: Vec<Point2>,
}

impl Track {
    pub fn new(
        id: impl Into<String>,
        kind: TrackKind,
        confidence: f64,
        points: Vec<Point2>,
    ) -> Self {
        Track {
            id: id.into(),
            kind,
            confidence,
            points,
        }
    }

    /// A track pinned at `point` for `len` frames.
    pub fn fixed(id: impl Into<String>, point: Point2, len: usize, confidence: f64) -> Self {
        Track::new(id, TrackKind::Static, confidence, vec![point; len])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when every point equals the first within 1e-9.
    pub fn is_stationary(&self) -> bool {
        match self.points.first() {
            None => true,
            Some(&first) => self.points.iter().all(|p| {
                (p.x - first.x).abs() <= STATIC_TOLERANCE
                    && (p.y - first.y).abs() <= STATIC_TOLERANCE
            }),
        }
    }

    /// Checks the per-track invariants. `field` prefixes the reported location.
    pub fn validate(&self, field: &str) -> Result<(), TrajectoryError> {
        if self.points.is_empty() {
            return Err(TrajectoryError::manifest(
                format!("{field}.points"),
                "track has no points",
            ));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(TrajectoryError::manifest(
                format!("{field}.confidence"),
                format!("confidence {} outside [0, 1]", self.confidence),
            ));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(TrajectoryError::manifest(
                format!("{field}.points[{i}]"),
                "non-finite coordinate",
            ));
        }
        if self.kind == TrackKind::Static && !self.is_stationary() {
            return Err(TrajectoryError::manifest(
                format!("{field}.points"),
                "static track points are not all equal",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub tracks: Vec<Track>,
    pub length: usize,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub prompt: Option<String>,
    /// Path of the image the tracks were drawn on; empty when unknown.
    pub image: String,
}

impl TrajectorySet {
    pub fn new(width: u32, height: u32, length: usize) -> Self {
        TrajectorySet {
            tracks: Vec::new(),
            length,
            fps: DEFAULT_FPS,
            width,
            height,
            prompt: None,
            image: String::new(),
        }
    }

    pub fn with_tracks(mut self, tracks: Vec<Track>) -> Self {
        self.tracks = tracks;
        self
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.width < 1 {
            return Err(TrajectoryError::manifest("width", "must be at least 1"));
        }
        if self.height < 1 {
            return Err(TrajectoryError::manifest("height", "must be at least 1"));
        }
        if self.length < 1 {
            return Err(TrajectoryError::manifest("length", "must be at least 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(TrajectoryError::manifest(
                "fps",
                "must be a positive number",
            ));
        }
        for (i, track) in self.tracks.iter().enumerate() {
            let field = format!("tracks[{i}]");
            if track.points.len() != self.length {
                return Err(TrajectoryError::manifest(
                    format!("{field}.points"),
                    format!(
                        "track length mismatch: track `{}` has {} points, manifest length is {}",
                        track.id,
                        track.points.len(),
                        self.length
                    ),
                ));
            }
            track.validate(&field)?;
        }
        Ok(())
    }

    /// Track positions in pixel coordinates of this set's image.
    pub fn pixel_tracks(&self) -> Vec<Vec<Point2>> {
        self.tracks
            .iter()
            .map(|t| {
                denormalize_points(&t.points, self.width, self.height)
                    .expect("validated set has non-zero dimensions")
            })
            .collect()
    }
}

fn check_dims(width: u32, height: u32) -> Result<(), TrajectoryError> {
    if width < 1 || height < 1 {
        return Err(TrajectoryError::Dimension { width, height });
    }
    Ok(())
}

/// Pixel coordinates to normalized image coordinates.
pub fn normalize_points(
    points: &[Point2],
    width: u32,
    height: u32,
) -> Result<Vec<Point2>, TrajectoryError> {
    check_dims(width, height)?;
    let (w, h) = (f64::from(width), f64::from(height));
    Ok(points
        .iter()
        .map(|p| Point2::new(p.x / w, p.y / h))
        .collect())
}

pub fn denormalize_points(
    points: &[Point2],
    width: u32,
    height: u32,
) -> Result<Vec<Point2>, TrajectoryError> {
    check_dims(width, height)?;
    let (w, h) = (f64::from(width), f64::from(height));
    Ok(points
        .iter()
        .map(|p| Point2::new(p.x * w, p.y * h))
        .collect())
}

/// Resamples a polyline to `target_len` points, uniformly in index space.
pub fn resample_points(
    points: &[Point2],
    target_len: usize,
) -> Result<Vec<Point2>, TrajectoryError> {
    if points.is_empty() {
        return Err(TrajectoryError::EmptyInput("track has no points"));
    }
    if target_len == 0 {
        return Err(TrajectoryError::EmptyInput("target length is zero"));
    }
    let n = points.len();
    if n == target_len {
        return Ok(points.to_vec());
    }
    if target_len == 1 || n == 1 {
        return Ok(vec![points[0]; target_len]);
    }
    let span = (n - 1) as f64;
    let steps = (target_len - 1) as f64;
    let out = (0..target_len)
        .map(|i| {
            let t = i as f64 * span / steps;
            let lo = t.floor() as usize;
            if lo >= n - 1 {
                return points[n - 1];
            }
            let frac = t - lo as f64;
            if frac == 0.0 {
                points[lo]
            } else {
                points[lo].lerp(points[lo + 1], frac)
            }
        })
        .collect();
    Ok(out)
}

pub fn resample(track: &Track, target_len: usize) -> Result<Track, TrajectoryError> {
    Ok(Track {
        points: resample_points(&track.points, target_len)?,
        ..track.clone()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: u32,
    image: String,
    width: u32,
    height: u32,
    fps: f64,
    length: usize,
    prompt: Option<String>,
    tracks: Vec<RawTrack>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrack {
    id: String,
    kind: TrackKind,
    confidence: f64,
    points: Vec<[f64; 2]>,
}

pub fn parse_manifest(bytes: &[u8]) -> Result<TrajectorySet, TrajectoryError> {
    let raw: RawManifest = serde_json::from_slice(bytes).map_err(|e| {
        let msg = e.to_string();
        let field = field_from_serde_message(&msg).unwrap_or_else(|| "<root>".to_string());
        TrajectoryError::manifest(field, msg)
    })?;
    if raw.version != MANIFEST_VERSION {
        return Err(TrajectoryError::manifest(
            "version",
            format!("unsupported version {}", raw.version),
        ));
    }
    let set = TrajectorySet {
        tracks: raw
            .tracks
            .into_iter()
            .map(|t| Track {
                id: t.id,
                kind: t.kind,
                confidence: t.confidence,
                points: t
                    .points
                    .into_iter()
                    .map(|[x, y]| Point2::new(x, y))
                    .collect(),
            })
            .collect(),
        length: raw.length,
        fps: raw.fps,
        width: raw.width,
        height: raw.height,
        prompt: raw.prompt,
        image: raw.image,
    };
    set.validate()?;
    Ok(set)
}

fn field_from_serde_message(msg: &str) -> Option<String> {
    static FIELD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"field `([^`]+)`").unwrap());
    FIELD.captures(msg).map(|c| c[1].to_string())
}

fn push_f64(out: &mut String, v: f64) {
    write!(out, "{v:.6}").unwrap();
}

fn push_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).unwrap());
}

/// Canonical JSON form: sorted keys, no whitespace, reals printed with six
/// decimals, single trailing newline.
pub fn serialize_manifest(set: &TrajectorySet) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("{\"fps\":");
    push_f64(&mut out, set.fps);
    write!(out, ",\"height\":{},\"image\":", set.height).unwrap();
    push_str(&mut out, &set.image);
    write!(out, ",\"length\":{},\"prompt\":", set.length).unwrap();
    match &set.prompt {
        Some(p) => push_str(&mut out, p),
        None => out.push_str("null"),
    }
    out.push_str(",\"tracks\":[");
    for (i, t) in set.tracks.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"confidence\":");
        push_f64(&mut out, t.confidence);
        out.push_str(",\"id\":");
        push_str(&mut out, &t.id);
        write!(out, ",\"kind\":\"{}\",\"points\":[", t.kind.as_str()).unwrap();
        for (j, p) in t.points.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push('[');
            push_f64(&mut out, p.x);
            out.push(',');
            push_f64(&mut out, p.y);
            out.push(']');
        }
        out.push_str("]}");
    }
    write!(
        out,
        "],\"version\":{},\"width\":{}}}",
        MANIFEST_VERSION, set.width
    )
    .unwrap();
    out.push('\n');
    out.into_bytes()
}

static LABEL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:[-*]\s*)?([A-Za-z][A-Za-z0-9_\- ]*?)\s*(?:\[([A-Za-z_]+)\])?\s*:\s*(.*)$")
        .unwrap()
});
static PAIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());

fn kind_from_label(label: &str, tag: Option<&str>) -> TrackKind {
    if let Some(kind) = tag.and_then(|t| TrackKind::parse(&t.to_ascii_lowercase())) {
        return kind;
    }
    let lower = label.to_ascii_lowercase();
    if lower.contains("refined") {
        TrackKind::RefinedUser
    } else if lower.contains("static") || lower.contains("anchor") {
        TrackKind::Static
    } else if lower.contains("user") {
        TrackKind::User
    } else {
        TrackKind::Secondary
    }
}

fn parse_pairs(text: &str, line: usize) -> Result<Vec<Point2>, TrajectoryError> {
    let mut points = Vec::new();
    let mut rest_start = 0;
    for cap in PAIR.captures_iter(text) {
        let whole = cap.get(0).unwrap();
        if !text[rest_start..whole.start()]
            .chars()
            .all(|c| c.is_whitespace() || matches!(c, ',' | ';' | '-' | '>'))
        {
            return Err(TrajectoryError::TrackText {
                line,
                message: format!("unexpected text before `{}`", whole.as_str()),
            });
        }
        rest_start = whole.end();
        let fields: Vec<&str> = cap[1]
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let malformed = || TrajectoryError::TrackText {
            line,
            message: format!("malformed coordinate pair `{}`", whole.as_str()),
        };
        if fields.len() != 2 {
            return Err(malformed());
        }
        let x: f64 = fields[0].parse().map_err(|_| malformed())?;
        let y: f64 = fields[1].parse().map_err(|_| malformed())?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(malformed());
        }
        points.push(Point2::new(x, y));
    }
    let tail = text[rest_start..].trim_matches(|c: char| c.is_whitespace() || c == ',' || c == ';');
    if !tail.is_empty() && tail.contains(['(', ')']) {
        return Err(TrajectoryError::TrackText {
            line,
            message: format!("malformed coordinate pair near `{tail}`"),
        });
    }
    Ok(points)
}

/// Parses labelled coordinate lists such as `track_1: (0.5, 0.5) (0.5, 0.4)`.
///
/// A label line starts a track; lines beginning with `(` continue the current
/// track (or start an unnamed one). Every other line is treated as prose and
/// ends the current track. Labels map to kinds by an optional `[kind]` tag,
/// otherwise by keywords, defaulting to [`TrackKind::Secondary`].
pub fn parse_track_text(text: &str) -> Result<Vec<Track>, TrajectoryError> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut open = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim_start();
        if trimmed.starts_with('(') {
            let points = parse_pairs(trimmed, lineno)?;
            if !open {
                let id = format!("track_{}", tracks.len() + 1);
                tracks.push(Track::new(id, TrackKind::Secondary, 0.5, Vec::new()));
                open = true;
            }
            tracks.last_mut().unwrap().points.extend(points);
            continue;
        }
        if let Some(cap) = LABEL_LINE.captures(line) {
            let rest = cap.get(3).map_or("", |m| m.as_str()).trim();
            if rest.is_empty() || rest.starts_with('(') {
                let label = cap[1].trim().to_string();
                let kind = kind_from_label(&label, cap.get(2).map(|m| m.as_str()));
                let points = parse_pairs(rest, lineno)?;
                tracks.push(Track::new(label, kind, kind.default_confidence(), points));
                open = true;
                continue;
            }
        }
        open = false;
    }
    tracks.retain(|t| !t.points.is_empty());
    if tracks.is_empty() {
        return Err(TrajectoryError::EmptyInput("no parseable track"));
    }
    Ok(tracks)
}

/// Formats tracks in the labelled coordinate grammar read by [`parse_track_text`].
pub fn format_track_text(tracks: &[Track]) -> String {
    let mut out = String::new();
    for t in tracks {
        write!(out, "{} [{}]:", t.id, t.kind.as_str()).unwrap();
        for p in &t.points {
            write!(out, " ({:.6}, {:.6})", p.x, p.y).unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSet {
    pub set: TrajectorySet,
    /// Set when the requested range exceeded the number of tracks and was clamped.
    pub clamped: bool,
}

/// Draws a subset size uniformly from `range`, then a uniform subset of that
/// size. Selected tracks keep their original order.
pub fn sample_tracks(
    set: &TrajectorySet,
    range: (usize, usize),
    seed: u64,
) -> Result<SampledSet, TrajectoryError> {
    let (low, high) = range;
    let n = set.tracks.len();
    if low == 0 || low > high || n == 0 {
        return Err(TrajectoryError::SampleRange { low, high });
    }
    let clamped = high > n;
    let high = high.min(n);
    let low = low.min(high);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = rng.random_range(low..=high);
    let mut picked = index::sample(&mut rng, n, size).into_vec();
    picked.sort_unstable();
    let tracks = picked.into_iter().map(|i| set.tracks[i].clone()).collect();
    Ok(SampledSet {
        set: TrajectorySet {
            tracks,
            ..set.clone()
        },
        clamped,
    })
}
