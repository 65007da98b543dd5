mod common;

use motionplan_core::degrade::{degrade, savgol, DegradeConfig};
use motionplan_core::evalkit::{
    epe, preference_counts, preference_rate, share_percent, Metric, PairOrder, Winner,
};
use motionplan_core::trajectory::{
    denormalize_points, format_track_text, normalize_points, parse_manifest, parse_track_text,
    serialize_manifest, Point2, Track, TrackKind, TrajectorySet,
};
use motionplan_core::volume::{rasterize, read_volume, write_volume, MotionVolume, SigmaConfig};
use proptest::prelude::*;
use rand::Rng;

fn point() -> impl Strategy<Value = Point2> {
    (-0.5f64..1.5, -0.5f64..1.5).prop_map(|(x, y)| Point2::new(x, y))
}

fn track(len: usize) -> impl Strategy<Value = Track> {
    (
        prop::collection::vec(point(), len),
        prop_oneof![
            Just(TrackKind::User),
            Just(TrackKind::RefinedUser),
            Just(TrackKind::Secondary)
        ],
        0.0f64..=1.0,
    )
        .prop_map(|(points, kind, c)| Track::new("t", kind, c, points))
}

fn set() -> impl Strategy<Value = TrajectorySet> {
    (1usize..12, 1usize..5, 1u32..400, 1u32..400).prop_flat_map(|(len, n, w, h)| {
        prop::collection::vec(track(len), n).prop_map(move |mut tracks| {
            for (i, t) in tracks.iter_mut().enumerate() {
                t.id = format!("track_{i}");
            }
            TrajectorySet::new(w, h, len).with_tracks(tracks)
        })
    })
}

fn single(c: Point2, conf: f64, len: usize) -> TrajectorySet {
    TrajectorySet::new(64, 48, len).with_tracks(vec![Track::new(
        "a",
        TrackKind::User,
        conf,
        vec![c; len],
    )])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalize_round_trip(pts in prop::collection::vec((-1e3f64..1e4, -1e3f64..1e4), 1..20), w in 1u32..5000, h in 1u32..5000) {
        let pixels: Vec<Point2> = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        let back = denormalize_points(&normalize_points(&pixels, w, h).unwrap(), w, h).unwrap();
        for (a, b) in pixels.iter().zip(&back) {
            prop_assert!((a.x - b.x).abs() <= 1e-12 * a.x.abs().max(1.0));
            prop_assert!((a.y - b.y).abs() <= 1e-12 * a.y.abs().max(1.0));
        }
    }

    #[test]
    fn manifest_round_trip(s in set()) {
        let bytes = serialize_manifest(&s);
        let parsed = parse_manifest(&bytes).unwrap();
        prop_assert_eq!(serialize_manifest(&parsed), bytes);
        for (a, b) in s.tracks.iter().zip(&parsed.tracks) {
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert!(p.distance(*q) < 1e-6);
            }
        }
    }

    #[test]
    fn track_text_round_trip(s in set()) {
        let parsed = parse_track_text(&format_track_text(&s.tracks)).unwrap();
        prop_assert_eq!(parsed.len(), s.tracks.len());
        for (a, b) in s.tracks.iter().zip(&parsed) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.kind, b.kind);
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert!((p.x - q.x).abs() <= 5e-7 && (p.y - q.y).abs() <= 5e-7);
            }
        }
    }

    #[test]
    fn volume_max_overlap(a in (0.0f64..1.0, 0.0f64..1.0), b in (0.0f64..1.0, 0.0f64..1.0), ca in 0.0f64..=1.0, cb in 0.0f64..=1.0) {
        let cfg = SigmaConfig { sigma_fraction: 0.05, ..SigmaConfig::default() };
        let ta = Track::new("a", TrackKind::User, ca, vec![Point2::new(a.0, a.1); 2]);
        let tb = Track::new("b", TrackKind::Secondary, cb, vec![Point2::new(b.0, b.1); 2]);
        let va = rasterize(&TrajectorySet::new(40, 30, 2).with_tracks(vec![ta.clone()]), 30, 40, &cfg).unwrap();
        let vb = rasterize(&TrajectorySet::new(40, 30, 2).with_tracks(vec![tb.clone()]), 30, 40, &cfg).unwrap();
        let both = rasterize(&TrajectorySet::new(40, 30, 2).with_tracks(vec![ta, tb]), 30, 40, &cfg).unwrap();
        for ((x, y), z) in va.data().iter().zip(vb.data()).zip(both.data()) {
            prop_assert_eq!(x.max(*y), *z);
        }
        prop_assert!(both.channels_identical());
        prop_assert!(both.data().iter().all(|&v| v <= ca.max(cb) as f32 + 1e-7));
    }

    #[test]
    fn volume_monotone_in_confidence(c in (0.0f64..1.0, 0.0f64..1.0), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let cfg = SigmaConfig { sigma_fraction: 0.05, ..SigmaConfig::default() };
        let p = Point2::new(c.0, c.1);
        let vl = rasterize(&single(p, lo, 2), 48, 64, &cfg).unwrap();
        let vh = rasterize(&single(p, hi, 2), 48, 64, &cfg).unwrap();
        prop_assert!(vl.data().iter().zip(vh.data()).all(|(a, b)| a <= b));
    }

    #[test]
    fn volume_translation(cx in 10i32..40, cy in 10i32..30, dx in -8i32..8, dy in -8i32..8, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let cfg = SigmaConfig { sigma_fraction: 0.05, ..SigmaConfig::default() };
        let at = |x: f64, y: f64| rasterize(&single(Point2::new(x / 64.0, y / 48.0), 0.8, 1), 48, 64, &cfg).unwrap();
        let (x0, y0) = (f64::from(cx) + fx, f64::from(cy) + fy);
        let v0 = at(x0, y0);
        let v1 = at(x0 + f64::from(dx), y0 + f64::from(dy));
        for row in 0..48i32 {
            for col in 0..64i32 {
                let (r2, c2) = (row + dy, col + dx);
                if (0..48).contains(&r2) && (0..64).contains(&c2) {
                    let a = v0.get(0, row as usize, col as usize, 0);
                    let b = v1.get(0, r2 as usize, c2 as usize, 0);
                    prop_assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn mvol_round_trip(len in 1usize..4, h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let data: Vec<f32> = (0..len * h * w * 3).map(|_| r.random::<f32>()).collect();
        let v = MotionVolume::from_data(len, h, w, data).unwrap();
        let bytes = write_volume(&v);
        let back = read_volume(&bytes).unwrap();
        prop_assert_eq!(write_volume(&back), bytes);
        prop_assert!(v.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn savgol_linearity(n in 7usize..40, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let max_w = if n % 2 == 0 { n - 1 } else { n };
        let window = 3 + 2 * r.random_range(0..=(max_w - 3) / 2);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let fx = savgol::filter(&x, window, 2).unwrap();
        let fy = savgol::filter(&y, window, 2).unwrap();
        let fc = savgol::filter(&combo, window, 2).unwrap();
        for i in 0..n {
            prop_assert!((fc[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn degrade_preserves_shape(seed in any::<u64>(), len in 6usize..60, s in prop_oneof![Just(0.5f64), Just(1.0f64)]) {
        let mut r = common::rng(seed);
        let t = common::random_track(&mut r, "a", len);
        let cfg = DegradeConfig::default();
        let (out, i) = degrade(&t, s, &cfg, 320, 240, seed).unwrap();
        prop_assert_eq!(out.points.len(), len);
        prop_assert_eq!(&out.id, &t.id);
        prop_assert_eq!(out.confidence, t.confidence);
        if s == 1.0 {
            prop_assert_eq!(i.value(), 0.0);
            prop_assert_eq!(out, t);
        } else {
            prop_assert!((0.1..1.0).contains(&i.value()));
        }
    }

    #[test]
    fn preference_swap_and_permutation(seed in any::<u64>(), n in 1usize..60) {
        let mut r = common::rng(seed);
        let vs: Vec<_> = (0..n).map(|i| common::random_verdict(&mut r, i, Metric::Overall)).collect();
        let c = preference_counts(&vs);
        let swapped: Vec<_> = vs.iter().map(|v| v.swapped()).collect();
        let mut shuffled = vs.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut r);
        let mut doubled = vs.clone();
        doubled.extend(vs.iter().cloned());
        let mut tied = vs.clone();
        tied.push(common::verdict(Winner::Tie, motionplan_core::evalkit::Strength::None));
        match preference_rate(&vs) {
            Ok(res) => {
                let sw = preference_rate(&swapped).unwrap();
                prop_assert_eq!(sw.rate_a_percent, 100.0 - res.rate_a_percent);
                prop_assert_eq!((sw.s_a, sw.s_b), (res.s_b, res.s_a));
                prop_assert_eq!(preference_rate(&shuffled).unwrap(), res);
                prop_assert_eq!(preference_rate(&doubled).unwrap().rate_a_percent, res.rate_a_percent);
                prop_assert_eq!(preference_rate(&tied).unwrap().rate_a_percent, res.rate_a_percent);
            }
            Err(_) => prop_assert_eq!(c.s_a + c.s_b, 0),
        }
    }

    #[test]
    fn share_is_bounded(a in 0u64..10_000, b in 0u64..10_000) {
        if let Some(p) = share_percent(a, b) {
            prop_assert!((0.0..=100.0).contains(&p));
            prop_assert_eq!(share_percent(b, a).unwrap(), 100.0 - p);
        } else {
            prop_assert_eq!(a + b, 0);
        }
    }

    #[test]
    fn order_unwind_is_involution(seed in any::<u64>()) {
        let o = PairOrder::from_seed(seed);
        prop_assert_eq!(o, PairOrder::from_seed(seed));
        for w in [Winner::A, Winner::B, Winner::Tie] {
            prop_assert_eq!(o.unwind(o.unwind(w)), w);
        }
    }

    #[test]
    fn epe_metric_properties(seed in any::<u64>(), n in 1usize..5, len in 1usize..10, k in 1u32..5) {
        let mut r = common::rng(seed);
        let a = common::random_set(&mut r, n, len, 100, 80);
        let b = common::random_set(&mut r, n, len, 100, 80);
        let c = common::random_set(&mut r, n, len, 100, 80);
        let ab = epe(&a, &b).unwrap();
        prop_assert_eq!(epe(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - epe(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(epe(&a, &c).unwrap() <= ab + epe(&b, &c).unwrap() + 1e-9);
        let scale = |s: &TrajectorySet| TrajectorySet { width: s.width * k, height: s.height * k, ..s.clone() };
        prop_assert!((epe(&scale(&a), &scale(&b)).unwrap() - f64::from(k) * ab).abs() < 1e-9 * f64::from(k) * ab.max(1.0));
    }
}

#[test]
fn volume_channels_and_range_on_random_sets() {
    let mut r = common::rng(11);
    for _ in 0..50 {
        let mut s = common::random_set(&mut r, 3, 4, 50, 40);
        for t in &mut s.tracks {
            t.confidence = r.random_range(0.0..=1.0);
        }
        let v = rasterize(
            &s,
            40,
            50,
            &SigmaConfig {
                sigma_fraction: 0.04,
                ..SigmaConfig::default()
            },
        )
        .unwrap();
        assert!(v.channels_identical());
        assert!(v.values_in_unit_range());
    }
}
