//! Pixel operators behind the crop, comparison and analysis tools.

use serde::{Deserialize, Serialize};

use super::blur::div_round_half_up;
use crate::raster::{Raster, Rgb};

/// Width of the gray column separating the two halves of a comparison.
pub const SEPARATOR_WIDTH: u32 = 8;
pub const SEPARATOR_COLOR: Rgb = Rgb::gray(0x80);
pub const SLACK_COLOR: Rgb = Rgb::WHITE;
pub const MARKER_COLOR: Rgb = Rgb::new(0xFF, 0x00, 0xFF);
/// Each crosshair arm spans this many pixels, centered on the sample point.
pub const MARKER_LENGTH: i64 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

/// Half-open box: `x0..x1` by `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    /// Intersection with the raster bounds, or `None` when empty.
    pub fn clamp_to(&self, raster: &Raster) -> Option<Rect> {
        let (w, h) = (i64::from(raster.width()), i64::from(raster.height()));
        let clamped = Rect {
            x0: self.x0.clamp(0, w),
            y0: self.y0.clamp(0, h),
            x1: self.x1.clamp(0, w),
            y1: self.y1.clamp(0, h),
        };
        (clamped.x0 < clamped.x1 && clamped.y0 < clamped.y1).then_some(clamped)
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})-({},{})", self.x0, self.y0, self.x1, self.y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

/// Copies the pixels inside an already clamped rect.
pub fn crop(src: &Raster, rect: Rect) -> Raster {
    Raster::from_fn(rect.width() as u32, rect.height() as u32, |x, y| {
        src.get(rect.x0 as u32 + x, rect.y0 as u32 + y)
    })
    .expect("clamped rect is non-empty")
}

/// `[left | separator | right]`, top-aligned, slack filled white.
pub fn side_by_side(left: &Raster, right: &Raster) -> Raster {
    let width = left.width() + SEPARATOR_WIDTH + right.width();
    let height = left.height().max(right.height());
    let right_x0 = left.width() + SEPARATOR_WIDTH;
    Raster::from_fn(width, height, |x, y| {
        if x < left.width() {
            if y < left.height() {
                left.get(x, y)
            } else {
                SLACK_COLOR
            }
        } else if x < right_x0 {
            SEPARATOR_COLOR
        } else if y < right.height() {
            right.get(x - right_x0, y)
        } else {
            SLACK_COLOR
        }
    })
    .expect("non-empty composite")
}

/// Interior grid-line positions `round(j * extent / parts)` for `j` in `1..parts`.
pub fn grid_positions(extent: u32, parts: u32) -> Vec<u32> {
    (1..parts)
        .map(|j| div_round_half_up(u64::from(j) * u64::from(extent), u64::from(parts)) as u32)
        .collect()
}

pub fn overlay_grid(src: &Raster, rows: u32, cols: u32, color: Rgb) -> Raster {
    let mut out = src.clone();
    for x in grid_positions(src.width(), cols) {
        for y in 0..src.height() {
            out.set(x, y, color);
        }
    }
    for y in grid_positions(src.height(), rows) {
        for x in 0..src.width() {
            out.set(x, y, color);
        }
    }
    out
}

pub fn extract_channel(src: &Raster, channel: Channel) -> Raster {
    Raster::from_fn(src.width(), src.height(), |x, y| {
        let p = src.get(x, y);
        Rgb::gray(match channel {
            Channel::R => p.r,
            Channel::G => p.g,
            Channel::B => p.b,
        })
    })
    .expect("same shape")
}

/// Mean color over the `window`×`window` box centered at `p`, clipped to
/// the raster; integer mean rounded half up.
pub fn window_mean(src: &Raster, p: Point, window: u32) -> Rgb {
    let half = i64::from(window / 2);
    let mut sums = [0u64; 3];
    let mut count = 0u64;
    for y in (p.y - half)..=(p.y + half) {
        for x in (p.x - half)..=(p.x + half) {
            if src.contains(x, y) {
                let px = src.get(x as u32, y as u32).channels();
                for c in 0..3 {
                    sums[c] += u64::from(px[c]);
                }
                count += 1;
            }
        }
    }
    let ch = |c: usize| div_round_half_up(sums[c], count) as u8;
    Rgb::new(ch(0), ch(1), ch(2))
}

/// Copy of `src` with a magenta crosshair centered at `p`.
pub fn crosshair(src: &Raster, p: Point) -> Raster {
    let mut out = src.clone();
    let arm = MARKER_LENGTH / 2;
    for d in -arm..=arm {
        out.put_clipped(p.x + d, p.y, MARKER_COLOR);
        out.put_clipped(p.x, p.y + d, MARKER_COLOR);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorFamily {
    Red,
    Orange,
    Yellow,
    Green,
    Cyan,
    Blue,
    Purple,
    Magenta,
}

pub const MIN_SATURATION: f64 = 0.2;
pub const MIN_VALUE: f64 = 0.15;

impl ColorFamily {
    pub const ALL: [ColorFamily; 8] = [
        ColorFamily::Red,
        ColorFamily::Orange,
        ColorFamily::Yellow,
        ColorFamily::Green,
        ColorFamily::Cyan,
        ColorFamily::Blue,
        ColorFamily::Purple,
        ColorFamily::Magenta,
    ];

    /// Hue center in degrees.
    pub fn center(self) -> f64 {
        match self {
            ColorFamily::Red => 0.0,
            ColorFamily::Orange => 30.0,
            ColorFamily::Yellow => 60.0,
            ColorFamily::Green => 120.0,
            ColorFamily::Cyan => 180.0,
            ColorFamily::Blue => 240.0,
            ColorFamily::Purple => 275.0,
            ColorFamily::Magenta => 310.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorFamily::Red => "red",
            ColorFamily::Orange => "orange",
            ColorFamily::Yellow => "yellow",
            ColorFamily::Green => "green",
            ColorFamily::Cyan => "cyan",
            ColorFamily::Blue => "blue",
            ColorFamily::Purple => "purple",
            ColorFamily::Magenta => "magenta",
        }
    }

    pub fn parse(s: &str) -> Option<ColorFamily> {
        let s = s.trim().to_ascii_lowercase();
        ColorFamily::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
/// Achromatic pixels report hue 0.
pub fn hsv(p: Rgb) -> (f64, f64, f64) {
    let (r, g, b) = (f64::from(p.r), f64::from(p.g), f64::from(p.b));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let value = max / 255.0;
    let saturation = if max == 0.0 { 0.0 } else { delta / max };
    if delta == 0.0 {
        return (0.0, saturation, value);
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((sector * 60.0).rem_euclid(360.0), saturation, value)
}

pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn in_family(p: Rgb, family: ColorFamily, tolerance: f64) -> bool {
    let (h, s, v) = hsv(p);
    s >= MIN_SATURATION && v >= MIN_VALUE && hue_distance(h, family.center()) <= tolerance
}

pub fn isolate_color(src: &Raster, family: ColorFamily, tolerance: f64) -> (Raster, usize) {
    let mut kept = 0;
    let out = Raster::from_fn(src.width(), src.height(), |x, y| {
        let p = src.get(x, y);
        if in_family(p, family, tolerance) {
            kept += 1;
            p
        } else {
            Rgb::WHITE
        }
    })
    .expect("same shape");
    (out, kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_position_formula() {
        assert_eq!(grid_positions(100, 2), vec![50]);
        assert_eq!(grid_positions(10, 10), (1..10).collect::<Vec<_>>());
        assert!(grid_positions(10, 1).is_empty());
        // 10 * 1 / 4 = 2.5 rounds up
        assert_eq!(grid_positions(10, 4), vec![3, 5, 8]);
    }

    #[test]
    fn hsv_reference_colors() {
        assert_eq!(hsv(Rgb::new(255, 0, 0)), (0.0, 1.0, 1.0));
        assert_eq!(hsv(Rgb::new(0, 0, 255)).0, 240.0);
        assert_eq!(hsv(Rgb::new(0, 255, 255)).0, 180.0);
        assert_eq!(hsv(Rgb::new(255, 0, 255)).0, 300.0);
        assert_eq!(hsv(Rgb::gray(0x80)).1, 0.0);
    }

    #[test]
    fn hue_wraps_around() {
        assert_eq!(hue_distance(350.0, 10.0), 20.0);
        assert_eq!(hue_distance(0.0, 240.0), 120.0);
    }

    #[test]
    fn family_membership() {
        assert!(in_family(Rgb::new(255, 0, 0), ColorFamily::Red, 25.0));
        assert!(!in_family(Rgb::new(0, 0, 255), ColorFamily::Red, 25.0));
        for f in ColorFamily::ALL {
            assert!(!in_family(Rgb::gray(0x80), f, 179.0));
        }
        // too dark
        assert!(!in_family(Rgb::new(30, 0, 0), ColorFamily::Red, 25.0));
    }

    #[test]
    fn window_mean_matches_hand_value() {
        let mut r = Raster::filled(3, 3, Rgb::BLACK).unwrap();
        r.set(0, 0, Rgb::gray(90));
        assert_eq!(window_mean(&r, Point { x: 1, y: 1 }, 3).to_hex(), "#0A0A0A");
        // corner window is clipped to 4 pixels: round(90 / 4) = round(22.5) = 23
        assert_eq!(window_mean(&r, Point { x: 0, y: 0 }, 3), Rgb::gray(23));
    }

    #[test]
    fn rect_clamping() {
        let r = Raster::filled(10, 10, Rgb::WHITE).unwrap();
        assert_eq!(Rect::new(-5, -5, 4, 4).clamp_to(&r), Some(Rect::new(0, 0, 4, 4)));
        assert_eq!(Rect::new(20, 20, 30, 30).clamp_to(&r), None);
        assert_eq!(Rect::new(5, 5, 5, 8).clamp_to(&r), None);
    }
}
