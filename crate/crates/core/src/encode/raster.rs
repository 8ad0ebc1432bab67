//! 1-px Bresenham lines and plus-shaped observation markers.

use super::canvas::{Canvas, Rect, Rgb};

/// Calls `plot` for every pixel on the Bresenham line from `a` to `b`, both ends included.
pub fn bresenham(a: (i64, i64), b: (i64, i64), mut plot: impl FnMut(i64, i64)) {
    let (mut x0, mut y0) = a;
    let (x1, y1) = b;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x0, y0);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Connects consecutive points with Bresenham segments; pixels outside `clip` are dropped.
/// A single point draws nothing.
pub fn rasterize_polyline(canvas: &mut Canvas, points: &[(i64, i64)], color: Rgb, clip: &Rect) {
    for pair in points.windows(2) {
        bresenham(pair[0], pair[1], |x, y| {
            canvas.plot(x, y, color, clip);
        });
    }
}

/// Arm length of the plus-shaped marker (5×5 footprint).
pub const MARKER_ARM: i64 = 2;

pub fn draw_marker(canvas: &mut Canvas, center: (i64, i64), color: Rgb, clip: &Rect) {
    let (cx, cy) = center;
    canvas.plot(cx, cy, color, clip);
    for k in 1..=MARKER_ARM {
        canvas.plot(cx - k, cy, color, clip);
        canvas.plot(cx + k, cy, color, clip);
        canvas.plot(cx, cy - k, color, clip);
        canvas.plot(cx, cy + k, color, clip);
    }
}
