use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use image::GrayImage;
use motionplan_core::bench::{
    format_stats, load_benchmark, stats, write_synthetic_benchmark, BenchError, SynthSpec,
};
use motionplan_core::degrade::{degrade, derive_seed};
use motionplan_core::evalkit::{
    aggregate, epe, load_verdicts, rows_to_csv, rows_to_json, track_like, AggregateRow, Verdict,
};
use motionplan_core::generator::{GeneratorClient, HttpGenerator, StubGenerator};
use motionplan_core::overlay::draw_overlay;
use motionplan_core::reason::{run_loop, ReasonConfig, SessionState};
use motionplan_core::trajectory::{parse_manifest, serialize_manifest, TrajectorySet};
use motionplan_core::vlm::{HttpVlmClient, ScriptedVlmClient, VlmClient};
use motionplan_core::volume::{
    export_frames_png, frame_file_name, rasterize, render_preview_video, write_volume,
};
use serde_json::json;

use crate::config::CliConfig;
use crate::error::{CliError, CliResult};
use crate::{BenchCommand, Cli, Command, PrefsFormat, ReasonArgs, ServeArgs};

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_manifest(path: &Path) -> CliResult<TrajectorySet> {
    parse_manifest(&read(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_image(path: &Path) -> CliResult<image::RgbImage> {
    Ok(image::open(path)
        .map_err(|e| CliError::io(path, e))?
        .to_rgb8())
}

/// PNG files of a directory in name order.
fn png_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    files.sort();
    Ok(files)
}

fn output(json: bool, value: serde_json::Value, text: String) -> String {
    if json {
        format!("{value}\n")
    } else {
        text
    }
}

pub fn run(cli: &Cli, cfg: &CliConfig) -> CliResult<String> {
    match &cli.command {
        Command::Rasterize {
            input,
            output: out,
            height,
            width,
            frames,
        } => {
            let set = read_manifest(input)?;
            let (h, w) = (
                height.unwrap_or(set.height as usize),
                width.unwrap_or(set.width as usize),
            );
            let vol = rasterize(&set, h, w, &cfg.sigma).map_err(CliError::invalid)?;
            write(out, &write_volume(&vol))?;
            let written = match frames {
                Some(dir) => export_frames_png(&vol, dir).map_err(|e| CliError::io(dir, e))?,
                None => Vec::new(),
            };
            let sigma = cfg.sigma.sigma_px(h, w);
            Ok(output(
                cli.json,
                json!({ "output": out, "length": vol.length(), "height": h, "width": w, "sigma_px": sigma, "frames": written }),
                format!(
                    "wrote {}: {} frames at {h}x{w}, sigma {sigma:.3} px\n",
                    out.display(),
                    vol.length()
                ),
            ))
        }
        Command::Degrade {
            input,
            output: out,
            score,
        } => {
            let mut set = read_manifest(input)?;
            let mut report = Vec::new();
            for (i, track) in set.tracks.iter_mut().enumerate() {
                let s = score.unwrap_or(track.confidence);
                let (degraded, intensity) = degrade(
                    track,
                    s,
                    &cfg.degrade,
                    set.width,
                    set.height,
                    derive_seed(cfg.seed, i as u64),
                )
                .map_err(CliError::invalid)?;
                report.push((track.id.clone(), intensity.value()));
                *track = degraded;
            }
            write(out, &serialize_manifest(&set))?;
            let mut text = String::new();
            for (id, i) in &report {
                writeln!(text, "{id}: intensity {i:.4}").unwrap();
            }
            writeln!(text, "wrote {}", out.display()).unwrap();
            let tracks: Vec<_> = report
                .iter()
                .map(|(id, i)| json!({ "id": id, "intensity": i }))
                .collect();
            Ok(output(
                cli.json,
                json!({ "output": out, "seed": cfg.seed, "tracks": tracks }),
                text,
            ))
        }
        Command::Overlay {
            input,
            image,
            output: out,
        } => {
            let set = read_manifest(input)?;
            let drawn =
                draw_overlay(&read_image(image)?, &set, &cfg.style).map_err(CliError::invalid)?;
            drawn.save(out).map_err(|e| CliError::io(out, e))?;
            Ok(output(
                cli.json,
                json!({ "output": out, "tracks": set.tracks.len() }),
                format!("wrote {}\n", out.display()),
            ))
        }
        Command::Preview { input, output: dir } => {
            let set = read_manifest(input)?;
            let frames = render_preview_video(
                &set,
                set.height as usize,
                set.width as usize,
                cfg.dot_radius,
            )
            .map_err(CliError::invalid)?;
            let paths = write_frames(dir, frames.iter())?;
            Ok(output(
                cli.json,
                json!({ "output": dir, "frames": paths }),
                format!("wrote {} frames to {}\n", paths.len(), dir.display()),
            ))
        }
        Command::Epe {
            reference,
            estimated,
            video,
        } => {
            let reference_set = read_manifest(reference)?;
            let estimate = match (estimated, video) {
                (Some(path), _) => read_manifest(path)?,
                (None, Some(dir)) => {
                    let frames = png_files(dir)?
                        .iter()
                        .map(|p| Ok(image::open(p).map_err(|e| CliError::io(p, e))?.to_luma8()))
                        .collect::<CliResult<Vec<GrayImage>>>()?;
                    track_like(&frames, &reference_set, &cfg.tracker).map_err(CliError::invalid)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let value = epe(&reference_set, &estimate).map_err(CliError::invalid)?;
            Ok(output(
                cli.json,
                json!({ "epe": value }),
                format!("epe: {value:.4} px\n"),
            ))
        }
        Command::Prefs { verdicts, format } => prefs(verdicts, *format, cli.json),
        Command::Reason(args) => reason(args, cfg, cli.json),
        Command::Bench { command } => bench(command, cfg, cli.json),
        Command::Serve(args) => serve(args, cfg),
    }
}

fn write_frames<'a>(
    dir: &Path,
    frames: impl ExactSizeIterator<Item = &'a GrayImage>,
) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let total = frames.len();
    frames
        .enumerate()
        .map(|(k, f)| {
            let path = dir.join(frame_file_name(k, total));
            f.save(&path).map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Plain-text table: one line per group.
pub fn format_prefs(rows: &[AggregateRow]) -> String {
    if rows.is_empty() {
        return "no verdicts\n".into();
    }
    let mut out = String::new();
    for r in rows {
        let category = if r.category.is_empty() {
            "-"
        } else {
            &r.category
        };
        let rate = r
            .rate_a_percent
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}%"));
        writeln!(
            out,
            "{} {} {category}: A {rate} (s_a {}, s_b {}, ties {}, total {})",
            r.metric.as_str(),
            r.judge.as_str(),
            r.s_a,
            r.s_b,
            r.n_ties,
            r.n_total
        )
        .unwrap();
    }
    out
}

fn prefs(path: &Path, format: PrefsFormat, json: bool) -> CliResult<String> {
    if !path.exists() {
        return Err(CliError::io(path, "no such file"));
    }
    let stored = load_verdicts(path).map_err(|e| match e {
        motionplan_core::evalkit::EvalError::Io(io) => CliError::io(path, io),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })?;
    let verdicts: Vec<Verdict> = stored.into_iter().map(|s| s.verdict).collect();
    let rows = aggregate(&verdicts);
    let bytes = match (format, json) {
        (PrefsFormat::Csv, _) => rows_to_csv(&rows),
        (PrefsFormat::Json, _) | (PrefsFormat::Text, true) => rows_to_json(&rows),
        (PrefsFormat::Text, false) => format_prefs(&rows).into_bytes(),
    };
    Ok(String::from_utf8(bytes).expect("exports are utf-8"))
}

fn generator(cfg: &CliConfig) -> CliResult<Arc<dyn GeneratorClient>> {
    Ok(match &cfg.generator_endpoint {
        Some(url) => Arc::new(HttpGenerator::new(
            url.clone(),
            Duration::from_secs(cfg.generator_timeout_secs),
        )?),
        None => Arc::new(StubGenerator {
            dot_radius: cfg.dot_radius,
        }),
    })
}

fn reason(args: &ReasonArgs, cfg: &CliConfig, json: bool) -> CliResult<String> {
    let mut set = read_manifest(&args.manifest)?;
    if let Some(p) = &args.prompt {
        set.prompt = Some(p.clone());
    }
    let image = read_image(&args.image)?;
    let vlm: Box<dyn VlmClient> = match (&args.scripted, &cfg.vlm) {
        (Some(path), _) => {
            Box::new(ScriptedVlmClient::from_path(path).map_err(|e| CliError::io(path, e))?)
        }
        (None, Some(c)) => Box::new(HttpVlmClient::new(c.clone())?),
        (None, None) => {
            return Err(CliError::Upstream(format!(
                "VLM client not configured: set {} or pass --scripted",
                motionplan_core::vlm::ENV_ENDPOINT
            )))
        }
    };
    let gen = generator(cfg)?;
    let state = SessionState::new(image, set).map_err(CliError::invalid)?;
    let rcfg = ReasonConfig {
        sigma: cfg.sigma,
        style: cfg.style.clone(),
    };
    let rounds = args.rounds.unwrap_or(cfg.max_rounds);
    let done = run_loop(state, vlm.as_ref(), gen.as_ref(), rounds, &rcfg)?;
    write(&args.output, &serialize_manifest(&done.current_set))?;
    if let Some(path) = &args.history {
        let mut bytes = serde_json::to_vec_pretty(&done.history).expect("history serializes");
        bytes.push(b'\n');
        write(path, &bytes)?;
    }
    if let (Some(dir), Some(frames)) = (&args.video, &done.last_video) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (k, png) in frames.iter().enumerate() {
            write(&dir.join(frame_file_name(k, frames.len())), png)?;
        }
    }
    let mut text = String::new();
    for (k, r) in done.history.iter().enumerate() {
        writeln!(
            text,
            "round {}: {} refined, {} secondary added, {} secondary replaced{}",
            k + 1,
            r.merge.refined.len(),
            r.merge.added_secondary.len(),
            r.merge.replaced_secondary.len(),
            if r.plan.done { ", done" } else { "" }
        )
        .unwrap();
    }
    writeln!(
        text,
        "wrote {} ({} tracks, {} rounds)",
        args.output.display(),
        done.current_set.tracks.len(),
        done.round
    )
    .unwrap();
    Ok(output(
        json,
        json!({
            "output": args.output,
            "rounds": done.round,
            "done": done.is_done(),
            "tracks": done.current_set.tracks.iter().map(|t| &t.id).collect::<Vec<_>>(),
            "prompt": done.history.last().map(|r| &r.plan.narrative_prompt),
        }),
        text,
    ))
}

fn bench_error(e: BenchError) -> CliError {
    match e {
        BenchError::Io { .. } => CliError::Io(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn bench(command: &BenchCommand, cfg: &CliConfig, json: bool) -> CliResult<String> {
    match command {
        BenchCommand::Validate { root } => {
            let b = load_benchmark(root).map_err(bench_error)?;
            Ok(output(
                json,
                json!({ "valid": true, "version": b.version, "items": b.items.len() }),
                format!("ok: {} items (version {})\n", b.items.len(), b.version),
            ))
        }
        BenchCommand::Stats { root } => {
            let s = stats(&load_benchmark(root).map_err(bench_error)?);
            Ok(output(
                json,
                serde_json::to_value(&s).expect("stats serialize"),
                format_stats(&s),
            ))
        }
        BenchCommand::Synth {
            root,
            counts,
            multi_object,
        } => {
            let mut spec = SynthSpec::reference(cfg.seed);
            if let Some(c) = counts {
                spec.counts = c.as_slice().try_into().map_err(|_| {
                    CliError::Usage(format!("--counts needs 5 values, got {}", c.len()))
                })?;
            }
            if let Some(m) = multi_object {
                spec.multi_object = *m;
            }
            let index = write_synthetic_benchmark(root, &spec).map_err(bench_error)?;
            Ok(output(
                json,
                json!({ "root": root, "items": index.items.len(), "seed": cfg.seed }),
                format!("wrote {} items to {}\n", index.items.len(), root.display()),
            ))
        }
    }
}

fn serve(args: &ServeArgs, cfg: &CliConfig) -> CliResult<String> {
    let mut sc = cfg.service.clone();
    if let Some(v) = args.bind {
        sc.bind = v;
    }
    if let Some(v) = &args.bench_root {
        sc.bench_root = v.clone();
    }
    if let Some(v) = &args.data_dir {
        sc.data_dir = v.clone();
    }
    if let Some(v) = &args.static_dir {
        sc.static_dir = Some(v.clone());
    }
    if let Some(v) = &args.videos_dir {
        sc.study.videos_dir = Some(v.clone());
    }
    if sc.vlm.is_none() {
        sc.vlm = cfg.vlm.clone();
    }
    if sc.generator_endpoint.is_none() {
        sc.generator_endpoint = cfg.generator_endpoint.clone();
    }
    sc.validate().map_err(CliError::invalid)?;
    motionplan_service::serve(sc).map_err(|e| match e {
        motionplan_service::StartError::Io(io) => CliError::Io(io.to_string()),
        motionplan_service::StartError::Bench(b) => bench_error(b),
        motionplan_service::StartError::Client(c) => CliError::Upstream(c.to_string()),
        other => CliError::Validation(other.to_string()),
    })?;
    Ok(String::new())
}
