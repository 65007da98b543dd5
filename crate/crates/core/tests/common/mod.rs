#![allow(dead_code)]

use motionplan_core::evalkit::{Judge, Metric, Strength, Verdict, Winner};
use motionplan_core::trajectory::{Point2, Track, TrackKind, TrajectorySet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A smooth-ish random walk inside the unit square.
pub fn random_track(rng: &mut impl Rng, id: &str, len: usize) -> Track {
    let mut p = Point2::new(rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
    let mut v = Point2::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
    let points = (0..len)
        .map(|_| {
            let out = p;
            v = Point2::new(
                v.x + rng.random_range(-0.005..0.005),
                v.y + rng.random_range(-0.005..0.005),
            );
            p = Point2::new(p.x + v.x, p.y + v.y);
            out
        })
        .collect();
    Track::new(id, TrackKind::User, 1.0, points)
}

pub fn random_set(rng: &mut impl Rng, tracks: usize, len: usize, w: u32, h: u32) -> TrajectorySet {
    let tracks = (0..tracks)
        .map(|i| random_track(rng, &format!("t{i}"), len))
        .collect();
    TrajectorySet::new(w, h, len).with_tracks(tracks)
}

pub fn random_verdict(rng: &mut impl Rng, i: usize, metric: Metric) -> Verdict {
    let winner = [Winner::A, Winner::B, Winner::Tie][rng.random_range(0..3)];
    let strength = if winner == Winner::Tie {
        Strength::None
    } else {
        [Strength::Slight, Strength::Moderate, Strength::Strong][rng.random_range(0..3)]
    };
    Verdict::new(
        format!("p{i}"),
        metric,
        winner,
        strength,
        Judge::Human,
        "base",
    )
    .unwrap()
}

pub fn verdict(winner: Winner, strength: Strength) -> Verdict {
    Verdict::new("p", Metric::Overall, winner, strength, Judge::Human, "base").unwrap()
}

pub fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

/// The clock scene: one user track turning the minute hand, and the four
/// scripted model replies of the correction sequence.
pub fn clock_session() -> (motionplan_core::reason::SessionState, Vec<String>) {
    let set =
        motionplan_core::trajectory::parse_manifest(read_fixture("clock/manifest.json").as_bytes())
            .unwrap();
    let image = image::RgbImage::from_pixel(set.width, set.height, image::Rgb([230, 225, 210]));
    let replies = (1..=4)
        .map(|k| read_fixture(&format!("clock/round_{k}.json")))
        .collect();
    (
        motionplan_core::reason::SessionState::new(image, set).unwrap(),
        replies,
    )
}

/// Four tracks, one per quadrant of a 128x128 frame, each kept in
/// `[14, 50]` px of its quadrant so discs of different tracks stay at least
/// 28 px apart. Steps are at most 3 px per axis.
pub fn quadrant_scene(seed: u64, len: usize) -> TrajectorySet {
    let mut r = rng(seed);
    let tracks = (0..4)
        .map(|q| {
            let (ox, oy) = (f64::from(q % 2) * 64.0, f64::from(q / 2) * 64.0);
            let mut p = (r.random_range(14.0..50.0), r.random_range(14.0..50.0));
            let points = (0..len)
                .map(|_| {
                    let out = Point2::new((ox + p.0) / 128.0, (oy + p.1) / 128.0);
                    let step = |v: f64, r: &mut ChaCha8Rng| {
                        let n = v + r.random_range(-3.0..3.0);
                        if !(14.0..=50.0).contains(&n) {
                            v - (n - v)
                        } else {
                            n
                        }
                    };
                    p = (step(p.0, &mut r), step(p.1, &mut r));
                    out
                })
                .collect();
            Track::new(format!("q{q}"), TrackKind::User, 1.0, points)
        })
        .collect();
    TrajectorySet::new(128, 128, len).with_tracks(tracks)
}

/// Stub video of `set`, tracked back from the first-frame positions.
pub fn closed_loop_epe(set: &TrajectorySet) -> f64 {
    use motionplan_core::evalkit::{epe, track_like, TrackerConfig};
    use motionplan_core::generator::{GenerationInput, GeneratorClient, StubGenerator};
    use motionplan_core::volume::{rasterize, SigmaConfig};
    let image = image::RgbImage::new(set.width, set.height);
    let volume = rasterize(
        set,
        set.height as usize,
        set.width as usize,
        &SigmaConfig::default(),
    )
    .unwrap();
    let video = StubGenerator { dot_radius: 3.0 }
        .generate(&GenerationInput {
            image: &image,
            set,
            volume: &volume,
            prompt: "",
        })
        .unwrap();
    let est = track_like(
        &video.luma_frames(),
        set,
        &TrackerConfig {
            search_radius: 8.0,
            refine: true,
        },
    )
    .unwrap();
    epe(set, &est).unwrap()
}
