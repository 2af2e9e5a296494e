//! Naive reference implementations and fixtures shared by the test targets.
//!
//! The references are written per pixel from the operator definitions and
//! share no code with the library.

#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use vislens_core::model::{BackendError, GenerationSettings, Message, ModelBackend, ModelReply, ToolCall};
use vislens_core::raster::{Raster, Rgb};
use vislens_core::stimulus::{self, StimulusKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_raster(rng: &mut impl Rng, max_side: u32) -> Raster {
    let (w, h) = (rng.random_range(1..=max_side), rng.random_range(1..=max_side));
    let pixels = (0..w * h)
        .map(|_| Rgb::new(rng.random(), rng.random(), rng.random()))
        .collect();
    Raster::new(w, h, pixels).unwrap()
}

fn px(r: &Raster, x: i64, y: i64) -> [u8; 3] {
    let p = r.pixels()[(y * i64::from(r.width()) + x) as usize];
    [p.r, p.g, p.b]
}

fn build(w: i64, h: i64, f: impl Fn(i64, i64) -> [u8; 3]) -> Raster {
    let mut pixels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = f(x, y);
            pixels.push(Rgb::new(r, g, b));
        }
    }
    Raster::new(w as u32, h as u32, pixels).unwrap()
}

/// Crop of the half-open box after clamping; `None` when empty.
pub fn naive_crop(src: &Raster, x0: i64, y0: i64, x1: i64, y1: i64) -> Option<Raster> {
    let (w, h) = (i64::from(src.width()), i64::from(src.height()));
    let (cx0, cy0, cx1, cy1) = (x0.clamp(0, w), y0.clamp(0, h), x1.clamp(0, w), y1.clamp(0, h));
    if cx0 >= cx1 || cy0 >= cy1 {
        return None;
    }
    Some(build(cx1 - cx0, cy1 - cy0, |x, y| px(src, cx0 + x, cy0 + y)))
}

pub fn naive_channel(src: &Raster, c: usize) -> Raster {
    build(i64::from(src.width()), i64::from(src.height()), |x, y| {
        let v = px(src, x, y)[c];
        [v, v, v]
    })
}

/// `num / den` rounded to nearest, halves up, for non-negative `num`.
fn round_ratio(num: i64, den: i64) -> i64 {
    let q = num / den;
    let rem = num - q * den;
    if 2 * rem >= den {
        q + 1
    } else {
        q
    }
}

pub fn naive_grid(src: &Raster, rows: i64, cols: i64, color: [u8; 3]) -> Raster {
    let (w, h) = (i64::from(src.width()), i64::from(src.height()));
    let on_col = |x: i64| (1..cols).any(|j| round_ratio(j * w, cols) == x);
    let on_row = |y: i64| (1..rows).any(|j| round_ratio(j * h, rows) == y);
    build(w, h, |x, y| if on_col(x) || on_row(y) { color } else { px(src, x, y) })
}

pub fn naive_side_by_side(a: &Raster, b: &Raster) -> Raster {
    let (aw, ah) = (i64::from(a.width()), i64::from(a.height()));
    let (bw, bh) = (i64::from(b.width()), i64::from(b.height()));
    build(aw + 8 + bw, ah.max(bh), |x, y| {
        if x < aw {
            if y < ah {
                px(a, x, y)
            } else {
                [255; 3]
            }
        } else if x < aw + 8 {
            [128; 3]
        } else if y < bh {
            px(b, x - aw - 8, y)
        } else {
            [255; 3]
        }
    })
}

/// Whether `(x, y)` lies on the segment: one pixel per step of the major
/// axis, the minor coordinate rounded to nearest with ties toward the
/// lexicographically larger endpoint.
pub fn on_line(p0: (i64, i64), p1: (i64, i64), x: i64, y: i64) -> bool {
    let (a, b) = if p0 <= p1 { (p0, p1) } else { (p1, p0) };
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    if dx >= dy.abs() {
        if x < a.0 || x > b.0 {
            return false;
        }
        if dx == 0 {
            return y == a.1;
        }
        // exact minor offset is t*dy/dx; ties break toward b
        let t = x - a.0;
        let (num, den) = (t * dy, dx);
        let target = if dy >= 0 {
            round_ratio(num, den)
        } else {
            -round_ratio(-num, den)
        };
        y == a.1 + target
    } else {
        let n = dy.abs();
        let k = (y - a.1) * dy.signum();
        if k < 0 || k > n {
            return false;
        }
        x == a.0 + round_ratio(k * dx, n)
    }
}

pub fn on_rect_border(c0: (i64, i64), c1: (i64, i64), x: i64, y: i64) -> bool {
    let (x0, x1) = (c0.0.min(c1.0), c0.0.max(c1.0));
    let (y0, y1) = (c0.1.min(c1.1), c0.1.max(c1.1));
    (x0..=x1).contains(&x) && (y0..=y1).contains(&y) && (x == x0 || x == x1 || y == y0 || y == y1)
}

/// Midpoint-circle membership: in the canonical octant, the pixel is the
/// outermost one whose inner edge midpoint is strictly inside the circle.
pub fn on_circle(c: (i64, i64), r: i64, x: i64, y: i64) -> bool {
    let (u, v) = ((x - c.0).abs(), (y - c.1).abs());
    if r == 0 {
        return u == 0 && v == 0;
    }
    let (big, small) = (u.max(v), u.min(v));
    let inner = (2 * big - 1).pow(2) + 4 * small * small < 4 * r * r;
    let outer = (2 * big + 1).pow(2) + 4 * small * small >= 4 * r * r;
    inner && outer
}

/// Brush membership: offset within a disc of diameter `t`.
pub fn in_brush(t: i64, dx: i64, dy: i64) -> bool {
    let lo = (t - 1) / 2;
    let hi = t / 2;
    if dx < -lo || dx > hi || dy < -lo || dy > hi {
        return false;
    }
    let shift = hi - lo;
    (2 * dx - shift).pow(2) + (2 * dy - shift).pow(2) <= t * t
}

/// Per-pixel stamping: a pixel is painted when some on-path pixel lies
/// within brush reach of it.
pub fn naive_stroke(src: &Raster, on_path: impl Fn(i64, i64) -> bool, color: [u8; 3], thickness: i64, reach: i64) -> Raster {
    build(i64::from(src.width()), i64::from(src.height()), |x, y| {
        for py in (y - reach)..=(y + reach) {
            for pxx in (x - reach)..=(x + reach) {
                if on_path(pxx, py) && in_brush(thickness, x - pxx, y - py) {
                    return color;
                }
            }
        }
        px(src, x, y)
    })
}

/// One clamp-to-edge `(2r+1)²` mean, rounded half up.
pub fn naive_box_pass(src: &Raster, r: i64) -> Raster {
    let (w, h) = (i64::from(src.width()), i64::from(src.height()));
    let n = (2 * r + 1) * (2 * r + 1);
    build(w, h, |x, y| {
        let mut sums = [0i64; 3];
        for dy in -r..=r {
            for dx in -r..=r {
                let p = px(src, (x + dx).clamp(0, w - 1), (y + dy).clamp(0, h - 1));
                for c in 0..3 {
                    sums[c] += i64::from(p[c]);
                }
            }
        }
        sums.map(|s| round_ratio(s, n) as u8)
    })
}

pub fn naive_blur(src: &Raster, r: i64) -> Raster {
    (0..3).fold(src.clone(), |acc, _| naive_box_pass(&acc, r))
}

/// Backend driven by a closure over the history.
pub struct FnBackend<F>(pub F);

impl<F> ModelBackend for FnBackend<F>
where
    F: Fn(&[Message]) -> Result<ModelReply, BackendError> + Send + Sync,
{
    fn generate(&self, history: &[Message], _: &[Value], _: &GenerationSettings) -> Result<ModelReply, BackendError> {
        (self.0)(history)
    }
}

pub fn call(tool: &str, args: Value) -> ToolCall {
    ToolCall {
        call_id: format!("c_{tool}"),
        tool_name: tool.to_string(),
        arguments: args.as_object().cloned().unwrap_or_default(),
    }
}

pub fn tool_reply(calls: Vec<ToolCall>) -> ModelReply {
    ModelReply::ToolCalls {
        calls,
        raw_text: String::new(),
    }
}

pub fn final_reply(text: &str) -> ModelReply {
    ModelReply::Final {
        raw_text: text.to_string(),
    }
}

/// The balanced 60-sample synthetic set: 3 kinds x 10 x both polarities.
pub fn emit_balanced_set(dir: &Path) -> stimulus::EmitSummary {
    let specs = stimulus::plan_specs(&StimulusKind::ALL, 10, true, 42, stimulus::DEFAULT_SIZE);
    stimulus::emit_manifest(&specs, dir).unwrap()
}
