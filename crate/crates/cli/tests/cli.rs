use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use motionplan_core::bench::{load_benchmark, stats};
use motionplan_core::degrade::{degrade, derive_seed, DegradeConfig};
use motionplan_core::overlay::{draw_overlay, OverlayStyle};
use motionplan_core::trajectory::{
    parse_manifest, serialize_manifest, Point2, Track, TrackKind, TrajectorySet,
};
use motionplan_core::volume::{rasterize, read_volume, SigmaConfig};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_motionplan"));
    for var in [
        "MOTIONPLAN_SEED",
        "MOTIONPLAN_VLM_ENDPOINT",
        "MOTIONPLAN_GENERATOR_ENDPOINT",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(err.lines().last().unwrap()).unwrap()
}

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn sample_set() -> TrajectorySet {
    let arc: Vec<Point2> = (0..12)
        .map(|i| {
            let t = i as f64 / 11.0;
            Point2::new(0.2 + 0.5 * t, 0.3 + 0.3 * t * t)
        })
        .collect();
    let mut set = TrajectorySet::new(64, 48, 12).with_tracks(vec![
        Track::new("push", TrackKind::User, 1.0, arc.clone()),
        Track::new(
            "slide",
            TrackKind::Secondary,
            0.5,
            arc.iter().map(|p| Point2::new(p.x, 0.8)).collect(),
        ),
    ]);
    set.prompt = Some("push the cup".into());
    set
}

/// The sample set as read back from its manifest file.
fn stored_set() -> TrajectorySet {
    parse_manifest(&serialize_manifest(&sample_set())).unwrap()
}

fn write_sample(dir: &Path) -> (PathBuf, PathBuf) {
    let manifest = dir.join("manifest.json");
    std::fs::write(&manifest, serialize_manifest(&sample_set())).unwrap();
    let image = dir.join("scene.png");
    RgbImage::from_fn(64, 48, |x, y| Rgb([x as u8 * 3, y as u8 * 4, 60]))
        .save(&image)
        .unwrap();
    (manifest, image)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rasterize_round_trips_through_mvol() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sample(dir.path());
    let out = dir.path().join("vol.mvol");
    let frames = dir.path().join("frames");
    let o = run(&[
        "rasterize",
        "-i",
        s(&manifest),
        "-o",
        s(&out),
        "--frames",
        s(&frames),
    ]);
    assert!(o.status.success(), "{o:?}");
    let vol = read_volume(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(
        vol,
        rasterize(&stored_set(), 48, 64, &SigmaConfig::default()).unwrap()
    );
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 12);
}

#[test]
fn degrade_at_full_score_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sample(dir.path());
    let out = dir.path().join("out.json");
    let o = run(&[
        "degrade",
        "-i",
        s(&manifest),
        "-o",
        s(&out),
        "--score",
        "1.0",
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(&manifest).unwrap()
    );
}

#[test]
fn degrade_matches_library_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sample(dir.path());
    let outputs: Vec<Vec<u8>> = ["3", "3", "4"]
        .iter()
        .enumerate()
        .map(|(k, seed)| {
            let out = dir.path().join(format!("out_{k}.json"));
            let o = run(&[
                "degrade",
                "-i",
                s(&manifest),
                "-o",
                s(&out),
                "--seed",
                seed,
                "--json",
            ]);
            assert!(o.status.success(), "{o:?}");
            let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
            assert_eq!(report["tracks"][0]["intensity"], 0.0);
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
    let mut expected = stored_set();
    for (i, t) in expected.tracks.iter_mut().enumerate() {
        *t = degrade(
            t,
            t.confidence,
            &DegradeConfig::default(),
            64,
            48,
            derive_seed(3, i as u64),
        )
        .unwrap()
        .0;
    }
    assert_eq!(outputs[0], serialize_manifest(&expected));
}

#[test]
fn overlay_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, image) = write_sample(dir.path());
    let out = dir.path().join("overlay.png");
    let o = run(&[
        "overlay",
        "-i",
        s(&manifest),
        "--image",
        s(&image),
        "-o",
        s(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    let base = image::open(&image).unwrap().to_rgb8();
    let expected = draw_overlay(&base, &stored_set(), &OverlayStyle::default()).unwrap();
    assert_eq!(image::open(&out).unwrap().to_rgb8(), expected);
}

#[test]
fn preview_then_epe_recovers_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sample(dir.path());
    let video = dir.path().join("video");
    assert!(run(&["preview", "-i", s(&manifest), "-o", s(&video)])
        .status
        .success());
    assert_eq!(std::fs::read_dir(&video).unwrap().count(), 12);
    let o = run(&[
        "epe",
        "--reference",
        s(&manifest),
        "--video",
        s(&video),
        "--json",
    ]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["epe"].as_f64().unwrap() < 1.0, "{v}");
    let o = run(&[
        "epe",
        "--reference",
        s(&manifest),
        "--estimated",
        s(&manifest),
    ]);
    assert_eq!(stdout(&o), "epe: 0.0000 px\n");
}

#[test]
fn prefs_on_hand_fixture() {
    let path = fixture_path("hand_verdicts.jsonl");
    let o = run(&["prefs", s(&path)]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("66.67%"), "{}", stdout(&o));
    let csv = run(&["prefs", s(&path), "--format", "csv"]);
    assert_eq!(
        stdout(&csv),
        "metric,judge,category,s_a,s_b,rate_a_percent,n_ties,n_total\noverall,human,,4,2,66.67,1,4\n"
    );
    let json = run(&["prefs", s(&path), "--json"]);
    let rows: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(rows[0]["s_a"], 4);
}

#[test]
fn bench_synth_validate_stats() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("bench");
    assert!(run(&["bench", "synth", s(&root), "--seed", "1"])
        .status
        .success());
    let o = run(&["bench", "validate", s(&root)]);
    assert_eq!(stdout(&o), "ok: 62 items (version synthetic-1)\n");
    let o = run(&["bench", "stats", s(&root), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let counts: Vec<_> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["count"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, [9, 17, 8, 9, 19]);
    assert!(v["rounding_note"].is_string());
    assert_eq!(
        serde_json::to_value(stats(&load_benchmark(&root).unwrap())).unwrap(),
        v
    );
    let text = stdout(&run(&["bench", "stats", s(&root)]));
    assert!(text.contains("note:"), "{text}");
}

#[test]
fn bench_validate_reports_broken_items() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("bench");
    let o = run(&[
        "bench",
        "synth",
        s(&root),
        "--counts",
        "1,1,0,0,0",
        "--multi-object",
        "0",
    ]);
    assert!(o.status.success(), "{o:?}");
    std::fs::write(root.join("manifests/item_002.json"), b"{}").unwrap();
    let o = run(&["bench", "validate", s(&root)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(error_line(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("item_002"));
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, image) = write_sample(dir.path());
    let o = run(&["rasterize", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["kind"], "usage");

    let o = run(&["rasterize", "-i", "/nonexistent/m.json", "-o", "x.mvol"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_line(&o)["error"]["kind"], "io");

    let bad = dir.path().join("bad.json");
    let mut set = sample_set();
    set.tracks[0].confidence = 1.5;
    std::fs::write(&bad, serialize_manifest(&set)).unwrap();
    let o = run(&[
        "rasterize",
        "-i",
        s(&bad),
        "-o",
        s(&dir.path().join("v.mvol")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(error_line(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("confidence"));

    let out = dir.path().join("r.json");
    let o = run(&[
        "reason",
        "--image",
        s(&image),
        "--manifest",
        s(&manifest),
        "-o",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(5));
    assert!(error_line(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("MOTIONPLAN_VLM_ENDPOINT"));

    assert!(run(&["--help"]).status.success());
}

#[test]
fn reason_with_scripted_replies() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, image) = write_sample(dir.path());
    let replies = dir.path().join("replies");
    std::fs::create_dir_all(&replies).unwrap();
    std::fs::write(
        replies.join("01.json"),
        r#"{"narrative_prompt": "the cup slides", "refined_tracks": [], "secondary_tracks": [{"id": "table", "kind": "static", "points": [[0.5, 0.9]]}], "done": false}"#,
    )
    .unwrap();
    std::fs::write(
        replies.join("02.txt"),
        "narrative_prompt: the cup slides off\ndone: true\n",
    )
    .unwrap();
    let out = dir.path().join("final.json");
    let history = dir.path().join("history.json");
    let video = dir.path().join("video");
    let o = run(&[
        "reason",
        "--image",
        s(&image),
        "--manifest",
        s(&manifest),
        "-o",
        s(&out),
        "--scripted",
        s(&replies),
        "--history",
        s(&history),
        "--video",
        s(&video),
        "--rounds",
        "4",
    ]);
    assert!(o.status.success(), "{o:?}");
    let set = parse_manifest(&std::fs::read(&out).unwrap()).unwrap();
    let ids: Vec<_> = set.tracks.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids, ["push", "slide", "table"]);
    assert!(set.tracks[2].is_stationary());
    let h: serde_json::Value = serde_json::from_slice(&std::fs::read(&history).unwrap()).unwrap();
    assert_eq!(h.as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_dir(&video).unwrap().count(), 12);
    assert!(stdout(&o).contains("2 rounds"), "{}", stdout(&o));
}

#[test]
fn config_file_env_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sample(dir.path());
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 3\n[sigma]\nsigma_fraction = 0.05\n").unwrap();
    let out = dir.path().join("v.mvol");
    let o = run(&[
        "--config",
        s(&cfg),
        "rasterize",
        "-i",
        s(&manifest),
        "-o",
        s(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    let wide = SigmaConfig {
        sigma_fraction: 0.05,
        ..SigmaConfig::default()
    };
    assert_eq!(
        read_volume(&std::fs::read(&out).unwrap()).unwrap(),
        rasterize(&stored_set(), 48, 64, &wide).unwrap()
    );

    let degrade_with = |extra: &[&str], env: Option<&str>| {
        let target = dir.path().join("d.json");
        let mut cmd = bin();
        cmd.args([
            "--config",
            s(&cfg),
            "degrade",
            "-i",
            s(&manifest),
            "-o",
            s(&target),
        ])
        .args(extra);
        if let Some(seed) = env {
            cmd.env("MOTIONPLAN_SEED", seed);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(&target).unwrap()
    };
    let from_file = degrade_with(&[], None);
    assert_eq!(from_file, degrade_with(&["--seed", "3"], Some("9")));
    assert_eq!(
        degrade_with(&[], Some("9")),
        degrade_with(&["--seed", "9"], None)
    );
    assert_ne!(from_file, degrade_with(&[], Some("9")));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sede = 3\n").unwrap();
    let o = run(&[
        "--config",
        s(&bad),
        "prefs",
        s(&fixture_path("hand_verdicts.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}
