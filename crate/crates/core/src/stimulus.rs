//! Synthetic illusion scenes with ground-truth labels.
//!
//! Each kind comes in a positive variant, where the classic effect holds,
//! and a negative one, where a small counterfactual edit breaks it. Labels
//! are entailed by exact pixel content, and every sample carries probe
//! metadata telling the scripted oracle where to look (never what to answer).
//!
//! These are geometric stand-ins, not psychophysically calibrated stimuli.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AnswerToken;
use crate::harness::manifest::SampleManifestEntry;
use crate::raster::{Raster, Rgb};
use crate::routing::TaskKind;
use crate::tools::draw;
use crate::tools::{Point, Rect};

pub const MIN_SIZE: u32 = 64;
pub const DEFAULT_SIZE: u32 = 128;

pub const PATCH_PIGMENT: Rgb = Rgb::gray(0x8F);
pub const DARK_SURROUND: Rgb = Rgb::gray(0x26);
pub const LIGHT_SURROUND: Rgb = Rgb::gray(0xDA);
pub const SEPARATOR: Rgb = Rgb::gray(0x14);
pub const LINE_BACKGROUND: Rgb = Rgb::gray(0xF2);
pub const RAY_COLOR: Rgb = Rgb::new(0x2A, 0x4B, 0x8C);
pub const TARGET_COLOR: Rgb = Rgb::new(0xD0, 0x10, 0x10);

/// Half-width of the crop window placed around each band interface.
const INTERFACE_HALF_WIDTH: i64 = 4;

#[derive(Debug, Error)]
pub enum StimulusError {
    #[error("invalid stimulus: {0}")]
    InvalidArgs(String),
    #[error("writing {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusKind {
    ContrastPair,
    BandStack,
    ReferenceLine,
}

impl StimulusKind {
    pub const ALL: [StimulusKind; 3] = [
        StimulusKind::ContrastPair,
        StimulusKind::BandStack,
        StimulusKind::ReferenceLine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StimulusKind::ContrastPair => "contrast_pair",
            StimulusKind::BandStack => "band_stack",
            StimulusKind::ReferenceLine => "reference_line",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        StimulusKind::ALL.into_iter().find(|k| k.as_str() == s.trim())
    }

    fn salt(self) -> u64 {
        match self {
            StimulusKind::ContrastPair => 0x11,
            StimulusKind::BandStack => 0x22,
            StimulusKind::ReferenceLine => 0x33,
        }
    }
}

/// Positive: the illusion genuinely holds. Negative: counterfactually edited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Stacking direction of a band stimulus. Vertical stacks bands top to
/// bottom; horizontal places them side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub kind: StimulusKind,
    pub polarity: Polarity,
    #[serde(default)]
    pub orientation: Orientation,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

impl StimulusSpec {
    pub fn new(kind: StimulusKind, polarity: Polarity, seed: u64) -> Self {
        StimulusSpec {
            kind,
            polarity,
            orientation: Orientation::Vertical,
            seed,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn sample_id(&self) -> String {
        let pol = match self.polarity {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        };
        match self.kind {
            StimulusKind::BandStack => {
                let o = match self.orientation {
                    Orientation::Vertical => "v",
                    Orientation::Horizontal => "h",
                };
                format!("{}-{pol}-{o}-s{}", self.kind.as_str(), self.seed)
            }
            _ => format!("{}-{pol}-s{}", self.kind.as_str(), self.seed),
        }
    }
}

/// Where the oracle should look, plus how its findings map to answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probes {
    /// Centers of the two patches.
    ContrastPair {
        points: [Point; 2],
        affirming: AnswerToken,
        denying: AnswerToken,
    },
    /// One crop window per interface between adjacent bands.
    BandStack {
        interfaces: Vec<Rect>,
        affirming: AnswerToken,
        denying: AnswerToken,
    },
    /// Endpoints of the target line and a window enclosing it.
    ReferenceLine {
        from: Point,
        to: Point,
        region: Rect,
        target_color: crate::raster::Rgb,
        affirming: AnswerToken,
        denying: AnswerToken,
    },
}

impl Probes {
    /// The answer asserting that the illusion holds.
    pub fn affirming(&self) -> AnswerToken {
        match self {
            Probes::ContrastPair { affirming, .. }
            | Probes::BandStack { affirming, .. }
            | Probes::ReferenceLine { affirming, .. } => *affirming,
        }
    }

    pub fn denying(&self) -> AnswerToken {
        match self {
            Probes::ContrastPair { denying, .. }
            | Probes::BandStack { denying, .. }
            | Probes::ReferenceLine { denying, .. } => *denying,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub spec: StimulusSpec,
    pub task: TaskKind,
    pub raster: Raster,
    pub question: String,
    pub options: Option<Vec<String>>,
    pub label: AnswerToken,
    pub polarity: Polarity,
    pub category: String,
    pub probes: Probes,
}

pub fn generate(spec: &StimulusSpec) -> Result<GeneratedSample, StimulusError> {
    if spec.width < MIN_SIZE || spec.height < MIN_SIZE {
        return Err(StimulusError::InvalidArgs(format!(
            "canvas {}x{} is smaller than {MIN_SIZE}x{MIN_SIZE}",
            spec.width, spec.height
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ spec.kind.salt());
    Ok(match spec.kind {
        StimulusKind::ContrastPair => contrast_pair(spec, &mut rng),
        StimulusKind::BandStack => band_stack(spec, &mut rng),
        StimulusKind::ReferenceLine => reference_line(spec, &mut rng),
    })
}

fn centered_square(center: Point, side: i64) -> Rect {
    let x0 = center.x - side / 2;
    let y0 = center.y - side / 2;
    Rect::new(x0, y0, x0 + side, y0 + side)
}

fn inside(rect: &Rect, x: u32, y: u32) -> bool {
    let (x, y) = (i64::from(x), i64::from(y));
    x >= rect.x0 && x < rect.x1 && y >= rect.y0 && y < rect.y1
}

const LETTERS: [AnswerToken; 4] = [AnswerToken::A, AnswerToken::B, AnswerToken::C, AnswerToken::D];

fn contrast_pair(spec: &StimulusSpec, rng: &mut ChaCha8Rng) -> GeneratedSample {
    let (w, h) = (spec.width, spec.height);
    let offset: u8 = rng.random_range(1..=16);
    let offset_on_right: bool = rng.random();
    let side = i64::from((w / 2).min(h) / 3);
    let left_center = Point { x: i64::from(w / 4), y: i64::from(h / 2) };
    let right_center = Point { x: i64::from(3 * w / 4), y: i64::from(h / 2) };
    let (left_patch, right_patch) = (centered_square(left_center, side), centered_square(right_center, side));

    let shifted = Rgb::gray(PATCH_PIGMENT.r + offset);
    let (left_pigment, right_pigment) = match (spec.polarity, offset_on_right) {
        (Polarity::Positive, _) => (PATCH_PIGMENT, PATCH_PIGMENT),
        (Polarity::Negative, true) => (PATCH_PIGMENT, shifted),
        (Polarity::Negative, false) => (shifted, PATCH_PIGMENT),
    };
    let raster = Raster::from_fn(w, h, |x, y| {
        if inside(&left_patch, x, y) {
            left_pigment
        } else if inside(&right_patch, x, y) {
            right_pigment
        } else if x < w / 2 {
            DARK_SURROUND
        } else {
            LIGHT_SURROUND
        }
    })
    .expect("size checked");

    // option 0 affirms the illusion, option 1 denies it
    let texts = [
        "The two squares are exactly the same color; the apparent difference is caused by their backgrounds.",
        "The two squares are genuinely different colors.",
        "The square on the dark background is tinted red.",
        "There is only one square in the image.",
    ];
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(rng);
    let position = |k: usize| order.iter().position(|&o| o == k).expect("permutation");
    let affirming = LETTERS[position(0)];
    let denying = LETTERS[position(1)];
    let options: Vec<String> = order.iter().map(|&k| texts[k].to_string()).collect();

    GeneratedSample {
        spec: *spec,
        task: TaskKind::TaskII,
        raster,
        question: "The two gray squares appear to differ in brightness. Which statement is correct?".into(),
        options: Some(options),
        label: label_for(spec.polarity, affirming, denying),
        polarity: spec.polarity,
        category: "color comparison".into(),
        probes: Probes::ContrastPair {
            points: [left_center, right_center],
            affirming,
            denying,
        },
    }
}

fn label_for(polarity: Polarity, affirming: AnswerToken, denying: AnswerToken) -> AnswerToken {
    match polarity {
        Polarity::Positive => affirming,
        Polarity::Negative => denying,
    }
}

/// Horizontal layout (bands side by side along x) at `w`×`h`, plus the
/// interface crop windows.
fn band_layout(w: u32, h: u32, polarity: Polarity, rng: &mut ChaCha8Rng) -> (Raster, Vec<Rect>) {
    let n: u32 = rng.random_range(4..=6);
    let start: u8 = rng.random_range(50..=80);
    let step: u8 = rng.random_range(24..=30);
    let separator_at: u32 = rng.random_range(1..n);
    let bounds: Vec<u32> = (0..=n)
        .map(|i| ((2 * u64::from(i) * u64::from(w) + u64::from(n)) / (2 * u64::from(n))) as u32)
        .collect();
    let band_of = |x: u32| bounds.iter().rposition(|&b| b <= x).expect("bounds start at 0").min(n as usize - 1);
    let separator_x = bounds[separator_at as usize];
    let raster = Raster::from_fn(w, h, |x, _| {
        if polarity == Polarity::Negative && x == separator_x {
            SEPARATOR
        } else {
            Rgb::gray(start + step * band_of(x) as u8)
        }
    })
    .expect("size checked");
    let interfaces = bounds[1..n as usize]
        .iter()
        .map(|&b| {
            Rect::new(
                i64::from(b) - INTERFACE_HALF_WIDTH,
                i64::from(h / 4),
                i64::from(b) + INTERFACE_HALF_WIDTH,
                i64::from(3 * h / 4),
            )
        })
        .collect();
    (raster, interfaces)
}

fn band_stack(spec: &StimulusSpec, rng: &mut ChaCha8Rng) -> GeneratedSample {
    let (raster, interfaces) = match spec.orientation {
        Orientation::Horizontal => band_layout(spec.width, spec.height, spec.polarity, rng),
        Orientation::Vertical => {
            let (r, rects) = band_layout(spec.height, spec.width, spec.polarity, rng);
            let rects = rects
                .into_iter()
                .map(|r| Rect::new(r.y0, r.x0, r.y1, r.x1))
                .collect();
            (r.transpose(), rects)
        }
    };
    GeneratedSample {
        spec: *spec,
        task: TaskKind::TaskI,
        raster,
        question: "The bands seem to be divided by distinct edges. Are adjacent bands actually \
                   touching directly, with no separator line between any of them?"
            .into(),
        options: None,
        label: label_for(spec.polarity, AnswerToken::Yes, AnswerToken::No),
        polarity: spec.polarity,
        category: "boundary detection".into(),
        probes: Probes::BandStack {
            interfaces,
            affirming: AnswerToken::Yes,
            denying: AnswerToken::No,
        },
    }
}

fn reference_line(spec: &StimulusSpec, rng: &mut ChaCha8Rng) -> GeneratedSample {
    let (w, h) = (i64::from(spec.width), i64::from(spec.height));
    let rays: i64 = rng.random_range(16..=24);
    let phase: i64 = rng.random_range(0..64);
    let jitter: i64 = rng.random_range(-3..=3);
    let deflection: i64 = rng.random_range(2..=8);
    let bow_down: bool = rng.random();

    let mut raster = Raster::filled(spec.width, spec.height, LINE_BACKGROUND).expect("size checked");
    let center = (w / 2, h / 2);
    let perimeter = 2 * (w + h);
    for k in 0..rays {
        let t = (phase + k * perimeter / rays) % perimeter;
        let end = perimeter_point(t, w, h);
        draw::stamp_path(&mut raster, &draw::line_points(center, end), RAY_COLOR, 1);
    }

    let y0 = h / 2 - h / 5 + jitter;
    let half = (w - 2 * (w / 8)) / 2 - 1;
    let xa = w / 8;
    let xb = xa + 2 * half;
    let xc = xa + half;
    let sign = if bow_down { 1 } else { -1 };
    let y_at = |x: i64| match spec.polarity {
        Polarity::Positive => y0,
        Polarity::Negative => {
            let num = (deflection * (half * half - (x - xc) * (x - xc))) as u64;
            y0 + sign * ((2 * num + (half * half) as u64) / (2 * (half * half) as u64)) as i64
        }
    };
    let mut path = Vec::new();
    for x in xa..xb {
        path.extend(draw::line_points((x, y_at(x)), (x + 1, y_at(x + 1))));
    }
    draw::stamp_path(&mut raster, &path, TARGET_COLOR, 1);

    GeneratedSample {
        spec: *spec,
        task: TaskKind::TaskI,
        raster,
        question: "The red horizontal line seems to bend against the radiating background. \
                   Is the red line actually perfectly straight?"
            .into(),
        options: None,
        label: label_for(spec.polarity, AnswerToken::Yes, AnswerToken::No),
        polarity: spec.polarity,
        category: "line straightness".into(),
        probes: Probes::ReferenceLine {
            from: Point { x: xa, y: y0 },
            to: Point { x: xb, y: y0 },
            region: Rect::new(xa - 2, y0 - 12, xb + 3, y0 + 13),
            target_color: TARGET_COLOR,
            affirming: AnswerToken::Yes,
            denying: AnswerToken::No,
        },
    }
}

/// Walks the border clockwise from the top-left corner.
fn perimeter_point(t: i64, w: i64, h: i64) -> (i64, i64) {
    if t < w {
        (t, 0)
    } else if t < w + h {
        (w - 1, t - w)
    } else if t < 2 * w + h {
        (w - 1 - (t - w - h), h - 1)
    } else {
        (0, h - 1 - (t - 2 * w - h))
    }
}

/// Balanced or seeded-random spec list for a batch of kinds.
pub fn plan_specs(kinds: &[StimulusKind], per_kind: usize, balance: bool, seed: u64, size: u32) -> Vec<StimulusSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::new();
    for (k, &kind) in kinds.iter().enumerate() {
        for i in 0..per_kind {
            let sample_seed = seed * 10_000 + k as u64 * 1_000 + i as u64;
            let orientation = if i % 2 == 0 {
                Orientation::Vertical
            } else {
                Orientation::Horizontal
            };
            let base = StimulusSpec::new(kind, Polarity::Positive, sample_seed)
                .with_orientation(orientation)
                .with_size(size, size);
            if balance {
                specs.push(base);
                specs.push(StimulusSpec {
                    polarity: Polarity::Negative,
                    ..base
                });
            } else {
                let polarity = if rng.random() {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                specs.push(StimulusSpec { polarity, ..base });
            }
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmitSummary {
    pub manifest_path: PathBuf,
    pub probes_path: PathBuf,
    pub n_samples: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PROBES_FILE: &str = "probes.json";

/// Writes PNGs, a JSONL manifest and the probe sidecar into `out_dir`.
pub fn emit_manifest(specs: &[StimulusSpec], out_dir: &Path) -> Result<EmitSummary, StimulusError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |e: std::io::Error| StimulusError::Io {
            path,
            message: e.to_string(),
        }
    };
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(io(&images))?;
    let mut lines = String::new();
    let mut probes = BTreeMap::new();
    let (mut n_positive, mut n_negative) = (0, 0);
    for spec in specs {
        let sample = generate(spec)?;
        let id = spec.sample_id();
        if probes.contains_key(&id) {
            return Err(StimulusError::InvalidArgs(format!("duplicate sample id {id}")));
        }
        let rel = format!("images/{id}.png");
        let png_path = out_dir.join(&rel);
        let png = sample.raster.to_png().map_err(|e| StimulusError::Io {
            path: png_path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(&png_path, png).map_err(io(&png_path))?;
        match sample.polarity {
            Polarity::Positive => n_positive += 1,
            Polarity::Negative => n_negative += 1,
        }
        let entry = SampleManifestEntry {
            sample_id: id.clone(),
            task: sample.task,
            image_path: PathBuf::from(rel),
            question: sample.question,
            options: sample.options,
            label: Some(sample.label),
            polarity: Some(sample.polarity),
            category: Some(sample.category),
        };
        lines.push_str(&serde_json::to_string(&entry).expect("manifest entry serializes"));
        lines.push('\n');
        probes.insert(id, sample.probes);
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, lines).map_err(io(&manifest_path))?;
    let probes_path = out_dir.join(PROBES_FILE);
    let body = serde_json::to_string_pretty(&probes).expect("probes serialize");
    std::fs::write(&probes_path, body + "\n").map_err(io(&probes_path))?;
    Ok(EmitSummary {
        manifest_path,
        probes_path,
        n_samples: specs.len(),
        n_positive,
        n_negative,
    })
}

pub fn load_probes(path: &Path) -> Result<BTreeMap<String, Probes>, StimulusError> {
    let text = std::fs::read_to_string(path).map_err(|e| StimulusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| StimulusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
