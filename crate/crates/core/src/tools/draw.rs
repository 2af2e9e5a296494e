//! Outline rasterization: lines, rectangles and circles stamped with a disc
//! brush. Everything outside the raster is clipped.

use crate::raster::{Raster, Rgb};

/// Offsets covered by a filled disc whose diameter is `thickness` pixels.
///
/// Odd thicknesses are centered on the stamped pixel; even ones lean toward
/// +x/+y by half a pixel.
pub fn disc_offsets(thickness: u32) -> Vec<(i64, i64)> {
    let t = i64::from(thickness.max(1));
    let lo = (t - 1) / 2;
    let hi = t / 2;
    let shift = hi - lo;
    let mut out = Vec::new();
    for dy in -lo..=hi {
        for dx in -lo..=hi {
            let (ex, ey) = (2 * dx - shift, 2 * dy - shift);
            if ex * ex + ey * ey <= t * t {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Integer midpoint stepping from one endpoint to the other, both inclusive.
///
/// Endpoints are put in a canonical order first so the path does not depend
/// on which end the caller lists first.
pub fn line_points(p0: (i64, i64), p1: (i64, i64)) -> Vec<(i64, i64)> {
    let (a, b) = if p0 <= p1 { (p0, p1) } else { (p1, p0) };
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Cells on the border of the axis-aligned box spanned by two corners
/// (both corners inclusive).
pub fn rectangle_points(c0: (i64, i64), c1: (i64, i64)) -> Vec<(i64, i64)> {
    let (x0, x1) = (c0.0.min(c1.0), c0.0.max(c1.0));
    let (y0, y1) = (c0.1.min(c1.1), c0.1.max(c1.1));
    let mut out = Vec::new();
    for x in x0..=x1 {
        out.push((x, y0));
        if y1 != y0 {
            out.push((x, y1));
        }
    }
    for y in (y0 + 1)..y1 {
        out.push((x0, y));
        if x1 != x0 {
            out.push((x1, y));
        }
    }
    out
}

/// Midpoint circle outline, deduplicated and sorted.
pub fn circle_points(center: (i64, i64), radius: i64) -> Vec<(i64, i64)> {
    let (cx, cy) = center;
    let mut out = Vec::new();
    let mut x = radius;
    let mut y = 0;
    let mut err = 1 - radius;
    while x >= y {
        for (px, py) in [
            (x, y),
            (y, x),
            (-y, x),
            (-x, y),
            (-x, -y),
            (-y, -x),
            (y, -x),
            (x, -y),
        ] {
            out.push((cx + px, cy + py));
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Stamps the disc brush at every path point.
pub fn stamp_path(raster: &mut Raster, path: &[(i64, i64)], color: Rgb, thickness: u32) {
    let brush = disc_offsets(thickness);
    let reach = i64::from(thickness);
    let (w, h) = (i64::from(raster.width()), i64::from(raster.height()));
    for &(x, y) in path {
        if x < -reach || y < -reach || x >= w + reach || y >= h + reach {
            continue;
        }
        for &(dx, dy) in &brush {
            raster.put_clipped(x + dx, y + dy, color);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_shapes() {
        assert_eq!(disc_offsets(1), vec![(0, 0)]);
        assert_eq!(disc_offsets(2).len(), 4);
        assert_eq!(disc_offsets(3).len(), 9);
        // 5x5 minus the four corners
        assert_eq!(disc_offsets(5).len(), 21);
    }

    #[test]
    fn line_is_endpoint_symmetric() {
        let a = line_points((0, 0), (7, 3));
        let mut b = line_points((7, 3), (0, 0));
        b.sort();
        let mut a2 = a.clone();
        a2.sort();
        assert_eq!(a2, b);
        assert_eq!(a.first(), Some(&(0, 0)));
        assert_eq!(a.last(), Some(&(7, 3)));
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn zero_radius_circle_is_one_point() {
        assert_eq!(circle_points((4, 4), 0), vec![(4, 4)]);
    }

    #[test]
    fn circle_points_lie_near_radius() {
        for r in 1..20i64 {
            for (x, y) in circle_points((0, 0), r) {
                let d = ((x * x + y * y) as f64).sqrt();
                assert!((d - r as f64).abs() < 1.0, "r={r} ({x},{y})");
            }
        }
    }
}
