//! Box blur with clamp-to-edge sampling, iterated three times to
//! approximate a Gaussian.

use crate::raster::{Raster, Rgb};

pub const PASSES: usize = 3;

/// `(2 * numerator + denominator) / (2 * denominator)`: integer division
/// rounding half up, for non-negative operands.
pub fn div_round_half_up(numerator: u64, denominator: u64) -> u64 {
    (2 * numerator + denominator) / (2 * denominator)
}

/// One box pass: each output pixel is the mean of the `(2r+1)²` window
/// around it, coordinates clamped to the edge, rounded half up.
///
/// Computed with per-axis prefix sums; the window sum is separable because
/// the clamping is applied per axis.
pub fn box_pass(src: &Raster, radius: u32) -> Raster {
    let (w, h) = (src.width() as usize, src.height() as usize);
    let r = radius as usize;
    let n = (2 * r as u64 + 1) * (2 * r as u64 + 1);

    let mut rows = vec![[0u64; 3]; w * h];
    let mut prefix = vec![[0u64; 3]; w.max(h) + 1];
    for y in 0..h {
        for x in 0..w {
            let p = src.get(x as u32, y as u32).channels();
            for c in 0..3 {
                prefix[x + 1][c] = prefix[x][c] + u64::from(p[c]);
            }
        }
        let first = widen(src.get(0, y as u32));
        let last = widen(src.get(w as u32 - 1, y as u32));
        for x in 0..w {
            rows[y * w + x] = clamped_window(&prefix, &first, &last, x, r, w);
        }
    }

    let mut out = Vec::with_capacity(w * h);
    let mut sums = vec![[0u64; 3]; w * h];
    for x in 0..w {
        for y in 0..h {
            for c in 0..3 {
                prefix[y + 1][c] = prefix[y][c] + rows[y * w + x][c];
            }
        }
        let first = rows[x];
        let last = rows[(h - 1) * w + x];
        for y in 0..h {
            sums[y * w + x] = clamped_window(&prefix, &first, &last, y, r, h);
        }
    }
    for s in sums {
        let ch = |c: usize| div_round_half_up(s[c], n) as u8;
        out.push(Rgb::new(ch(0), ch(1), ch(2)));
    }
    Raster::new(src.width(), src.height(), out).expect("same shape as source")
}

fn widen(p: Rgb) -> [u64; 3] {
    p.channels().map(u64::from)
}

fn clamped_window(
    prefix: &[[u64; 3]],
    first: &[u64; 3],
    last: &[u64; 3],
    i: usize,
    r: usize,
    len: usize,
) -> [u64; 3] {
    let below = r.saturating_sub(i) as u64;
    let above = (i + r).saturating_sub(len - 1) as u64;
    let lo = i.saturating_sub(r);
    let hi = (i + r).min(len - 1);
    let mut out = [0u64; 3];
    for c in 0..3 {
        out[c] = below * first[c] + above * last[c] + prefix[hi + 1][c] - prefix[lo][c];
    }
    out
}

pub fn blur(src: &Raster, radius: u32) -> Raster {
    let mut current = box_pass(src, radius);
    for _ in 1..PASSES {
        current = box_pass(&current, radius);
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lone_bright_pixel_single_pass() {
        let mut r = Raster::filled(5, 5, Rgb::BLACK).unwrap();
        r.set(2, 2, Rgb::gray(255));
        let out = box_pass(&r, 1);
        // round(255 / 9) = round(28.33)
        assert_eq!(out.get(2, 2), Rgb::gray(28));
        assert_eq!(out.get(0, 0), Rgb::BLACK);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(div_round_half_up(9, 2), 5);
        assert_eq!(div_round_half_up(13, 9), 1);
        assert_eq!(div_round_half_up(14, 4), 4);
        assert_eq!(div_round_half_up(90, 9), 10);
    }

    #[test]
    fn constant_field_is_fixed() {
        let r = Raster::filled(9, 4, Rgb::new(12, 200, 77)).unwrap();
        assert_eq!(blur(&r, 6), r);
    }
}
