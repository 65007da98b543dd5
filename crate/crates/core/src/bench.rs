//! Benchmark store: an `index.json` listing items, one manifest and one
//! pre-event image per item, and distribution statistics over categories.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::overlay::encode_png;
use crate::trajectory::{
    parse_manifest, serialize_manifest, Point2, Track, TrackKind, TrajectorySet,
};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid index: {0}")]
    Index(String),
    #[error("{} invalid item(s):\n  {}", .0.len(), .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Collision,
    ConstraintChange,
    ToolMechanisms,
    Flow,
    CommonObjects,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Collision,
        Category::ConstraintChange,
        Category::ToolMechanisms,
        Category::Flow,
        Category::CommonObjects,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Collision => "Collision",
            Category::ConstraintChange => "Constraint Change",
            Category::ToolMechanisms => "Tool Mechanisms",
            Category::Flow => "Flow",
            Category::CommonObjects => "Common Objects",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Category counts of the reference benchmark, in [`Category::ALL`] order.
pub const REFERENCE_COUNTS: [usize; 5] = [9, 17, 8, 9, 19];
/// Percentages as published alongside the reference counts.
pub const REFERENCE_PUBLISHED_PERCENTS: [u32; 5] = [15, 27, 13, 14, 31];
pub const REFERENCE_MULTI_OBJECT: usize = 19;

pub const TRIGGER_TYPES: [&str; 7] = [
    "support failure",
    "connection removal",
    "non-contact force disappearance",
    "external force onset",
    "pressure release",
    "mechanical release",
    "unstable equilibrium",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub id: String,
    pub image: String,
    pub manifest: String,
    pub category: Category,
    pub trigger_type: String,
    pub multi_object: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Index {
    pub version: String,
    pub items: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchItem {
    pub id: String,
    /// Absolute path of the image.
    pub image: PathBuf,
    /// Absolute path of the manifest.
    pub manifest_path: PathBuf,
    pub manifest: TrajectorySet,
    pub category: Category,
    pub trigger_type: String,
    pub multi_object: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub version: String,
    pub root: PathBuf,
    /// Sorted by id.
    pub items: Vec<BenchItem>,
}

impl Benchmark {
    pub fn item(&self, id: &str) -> Option<&BenchItem> {
        self.items
            .binary_search_by(|i| i.id.as_str().cmp(id))
            .ok()
            .map(|k| &self.items[k])
    }

    pub fn index(&self) -> Index {
        Index {
            version: self.version.clone(),
            items: self
                .items
                .iter()
                .map(|i| IndexEntry {
                    id: i.id.clone(),
                    image: relative(&self.root, &i.image),
                    manifest: relative(&self.root, &i.manifest_path),
                    category: i.category,
                    trigger_type: i.trigger_type.clone(),
                    multi_object: i.multi_object,
                })
                .collect(),
        }
    }
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn read(path: &Path) -> Result<Vec<u8>, BenchError> {
    fs::read(path).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_item(root: &Path, entry: &IndexEntry) -> Result<BenchItem, Vec<String>> {
    let mut errors = Vec::new();
    let id = &entry.id;
    if id.trim().is_empty() {
        errors.push("empty id".to_string());
    }
    if entry.trigger_type.trim().is_empty() {
        errors.push(format!("{id}: empty trigger_type"));
    }
    let image = root.join(&entry.image);
    let manifest_path = root.join(&entry.manifest);
    let dims = match image::image_dimensions(&image) {
        Ok(d) => Some(d),
        Err(e) => {
            errors.push(format!("{id}: image {}: {e}", entry.image));
            None
        }
    };
    let manifest = match fs::read(&manifest_path) {
        Ok(bytes) => match parse_manifest(&bytes) {
            Ok(set) => Some(set),
            Err(e) => {
                errors.push(format!("{id}: manifest {}: {e}", entry.manifest));
                None
            }
        },
        Err(e) => {
            errors.push(format!("{id}: manifest {}: {e}", entry.manifest));
            None
        }
    };
    if let (Some((w, h)), Some(set)) = (dims, &manifest) {
        if (w, h) != (set.width, set.height) {
            errors.push(format!(
                "{id}: image is {w}x{h} but the manifest says {}x{}",
                set.width, set.height
            ));
        }
    }
    match manifest {
        Some(manifest) if errors.is_empty() => Ok(BenchItem {
            id: id.clone(),
            image,
            manifest_path,
            manifest,
            category: entry.category,
            trigger_type: entry.trigger_type.clone(),
            multi_object: entry.multi_object,
        }),
        _ => Err(errors),
    }
}

/// Loads and validates a benchmark directory. Every failing item is
/// reported, not only the first.
pub fn load_benchmark(root: &Path) -> Result<Benchmark, BenchError> {
    let index_path = root.join(INDEX_FILE);
    let index: Index = serde_json::from_slice(&read(&index_path)?)
        .map_err(|e| BenchError::Index(e.to_string()))?;
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in &index.items {
        if !seen.insert(entry.id.as_str()) {
            errors.push(format!("{}: duplicate id", entry.id));
        }
    }
    let mut items = Vec::new();
    for entry in &index.items {
        match load_item(root, entry) {
            Ok(item) => items.push(item),
            Err(e) => errors.extend(e),
        }
    }
    if !errors.is_empty() {
        return Err(BenchError::Invalid(errors));
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Benchmark {
        version: index.version,
        root: root.to_path_buf(),
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: Category,
    pub count: usize,
    /// Rounded half up.
    pub percent: u32,
    pub exact_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchStats {
    pub total: usize,
    pub rows: Vec<CategoryRow>,
    pub multi_object: usize,
    pub multi_object_percent: u32,
    pub multi_object_exact_percent: f64,
    pub rounded_sum: u32,
    /// Set when the rounded category percentages do not add up to 100.
    pub rounding_note: Option<String>,
}

/// `100 * count / total` rounded half up, with exact integer arithmetic.
pub fn percent_half_up(count: usize, total: usize) -> u32 {
    if total == 0 {
        return 0;
    }
    ((200 * count as u64 + total as u64) / (2 * total as u64)) as u32
}

pub fn stats_from_counts(counts: [usize; 5], multi_object: usize) -> BenchStats {
    let total: usize = counts.iter().sum();
    let exact = |c: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * c as f64 / total as f64
        }
    };
    let rows: Vec<CategoryRow> = Category::ALL
        .iter()
        .zip(counts)
        .map(|(&category, count)| CategoryRow {
            category,
            count,
            percent: percent_half_up(count, total),
            exact_percent: exact(count),
        })
        .collect();
    let rounded_sum = rows.iter().map(|r| r.percent).sum();
    let rounding_note = (total > 0 && rounded_sum != 100).then(|| {
        let halves: Vec<String> = rows
            .iter()
            .filter(|r| (r.exact_percent - r.exact_percent.floor() - 0.5).abs() < 0.1)
            .map(|r| format!("{} {:.2}%", r.category, r.exact_percent))
            .collect();
        format!(
            "rounded percentages sum to {rounded_sum}; near-half values: {}",
            if halves.is_empty() {
                "none".to_string()
            } else {
                halves.join(", ")
            }
        )
    });
    BenchStats {
        total,
        rows,
        multi_object,
        multi_object_percent: percent_half_up(multi_object, total),
        multi_object_exact_percent: exact(multi_object),
        rounded_sum,
        rounding_note,
    }
}

pub fn stats(b: &Benchmark) -> BenchStats {
    let mut counts = [0usize; 5];
    for item in &b.items {
        counts[Category::ALL
            .iter()
            .position(|&c| c == item.category)
            .unwrap()] += 1;
    }
    stats_from_counts(counts, b.items.iter().filter(|i| i.multi_object).count())
}

pub fn format_stats(s: &BenchStats) -> String {
    let mut out = format!(
        "{:<18} {:>6} {:>8} {:>9}\n",
        "category", "count", "percent", "exact"
    );
    for r in &s.rows {
        out.push_str(&format!(
            "{:<18} {:>6} {:>7}% {:>8.2}%\n",
            r.category.label(),
            r.count,
            r.percent,
            r.exact_percent
        ));
    }
    out.push_str(&format!(
        "{:<18} {:>6} {:>7}%\n",
        "total", s.total, s.rounded_sum
    ));
    out.push_str(&format!(
        "{:<18} {:>6} {:>7}% {:>8.2}%\n",
        "multi-object", s.multi_object, s.multi_object_percent, s.multi_object_exact_percent
    ));
    if let Some(note) = &s.rounding_note {
        out.push_str(&format!("note: {note}\n"));
    }
    out
}

/// Recipe for a procedurally generated benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub counts: [usize; 5],
    pub multi_object: usize,
    pub width: u32,
    pub height: u32,
    pub length: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn reference(seed: u64) -> Self {
        SynthSpec {
            counts: REFERENCE_COUNTS,
            multi_object: REFERENCE_MULTI_OBJECT,
            width: 96,
            height: 64,
            length: 16,
            seed,
        }
    }
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, color: Rgb<u8>) {
    for y in y0.max(0)..(y0 + h).min(i64::from(img.height())) {
        for x in x0.max(0)..(x0 + w).min(i64::from(img.width())) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// A flat scene: floor, a trigger object and one or more reacting blocks.
fn synth_scene(rng: &mut ChaCha8Rng, w: u32, h: u32, objects: usize) -> (RgbImage, Point2) {
    let sky = Rgb([rng.random_range(150..230), rng.random_range(150..230), 230]);
    let mut img = RgbImage::from_pixel(w, h, sky);
    let floor = (h as i64 * 3) / 4;
    fill_rect(
        &mut img,
        0,
        floor,
        w as i64,
        h as i64 - floor,
        Rgb([90, 70, 50]),
    );
    let trigger = Point2::new(rng.random_range(0.1..0.3), rng.random_range(0.3..0.6));
    let (tx, ty) = ((trigger.x * w as f64) as i64, (trigger.y * h as f64) as i64);
    fill_rect(&mut img, tx - 3, ty - 3, 6, 6, Rgb([220, 40, 40]));
    for k in 0..objects {
        let bw = rng.random_range(4..10);
        let bh = rng.random_range(6..16);
        let x = (w as i64 * (45 + 15 * k as i64)) / 100;
        let color = Rgb([
            rng.random_range(0..120),
            rng.random_range(80..200),
            rng.random_range(0..120),
        ]);
        fill_rect(&mut img, x, floor - bh, bw, bh, color);
    }
    (img, trigger)
}

/// Writes a synthetic benchmark with the requested category counts to
/// `root`, creating `index.json`, `images/` and `manifests/`.
pub fn write_synthetic_benchmark(root: &Path, spec: &SynthSpec) -> Result<Index, BenchError> {
    let total: usize = spec.counts.iter().sum();
    if spec.multi_object > total {
        return Err(BenchError::Index(format!(
            "{} multi-object items requested out of {total}",
            spec.multi_object
        )));
    }
    let io = |path: &Path, e: std::io::Error| BenchError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    for sub in ["images", "manifests"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let multi: BTreeSet<usize> = rand::seq::index::sample(&mut rng, total, spec.multi_object)
        .into_iter()
        .collect();
    let mut items = Vec::new();
    let mut n = 0;
    for (category, &count) in Category::ALL.iter().zip(&spec.counts) {
        for _ in 0..count {
            let id = format!("item_{:03}", n + 1);
            let multi_object = multi.contains(&n);
            let (img, start) = synth_scene(
                &mut rng,
                spec.width,
                spec.height,
                if multi_object { 3 } else { 1 },
            );
            let end = Point2::new(
                start.x + rng.random_range(0.1..0.25),
                start.y + rng.random_range(-0.1..0.1),
            );
            let points = (0..spec.length)
                .map(|i| start.lerp(end, i as f64 / (spec.length.max(2) - 1) as f64))
                .collect();
            let mut set = TrajectorySet::new(spec.width, spec.height, spec.length)
                .with_tracks(vec![Track::new("user_1", TrackKind::User, 1.0, points)]);
            set.image = format!("images/{id}.png");
            set.prompt = Some(format!(
                "{} the red block",
                ["push", "pull", "tap", "release"][n % 4]
            ));
            let image_path = root.join(&set.image);
            let png = encode_png(&img).map_err(|e| BenchError::Index(e.to_string()))?;
            fs::write(&image_path, png).map_err(|e| io(&image_path, e))?;
            let manifest = format!("manifests/{id}.json");
            let manifest_path = root.join(&manifest);
            fs::write(&manifest_path, serialize_manifest(&set))
                .map_err(|e| io(&manifest_path, e))?;
            items.push(IndexEntry {
                id,
                image: set.image.clone(),
                manifest,
                category: *category,
                trigger_type: TRIGGER_TYPES[n % TRIGGER_TYPES.len()].to_string(),
                multi_object,
            });
            n += 1;
        }
    }
    let index = Index {
        version: "synthetic-1".into(),
        items,
    };
    let index_path = root.join(INDEX_FILE);
    let mut bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
    bytes.push(b'\n');
    fs::write(&index_path, bytes).map_err(|e| io(&index_path, e))?;
    Ok(index)
}
