use super::canvas::Rect;
use crate::error::{Error, Result};

/// Grid shape for `n_panels` panels: `cols = ceil(sqrt(n))`, `rows = ceil(n / cols)`.
pub fn layout_grid(n_panels: usize) -> Result<(usize, usize)> {
    if n_panels == 0 {
        return Err(Error::Validation("layout needs at least one panel".into()));
    }
    let mut cols = (n_panels as f64).sqrt().floor() as usize;
    while cols * cols < n_panels {
        cols += 1;
    }
    let rows = n_panels.div_ceil(cols);
    Ok((rows, cols))
}

/// Cell rectangles of a `rows × cols` grid over a `width × height` canvas,
/// row-major, each shrunk by `margin` pixels on every side.
pub fn panel_rects(width: u32, height: u32, rows: usize, cols: usize, margin: u32) -> Vec<Rect> {
    let (w, h, m) = (width as i64, height as i64, margin as i64);
    let (r, c) = (rows as i64, cols as i64);
    let mut out = Vec::with_capacity(rows * cols);
    for row in 0..r {
        for col in 0..c {
            let x0 = col * w / c;
            let x1 = (col + 1) * w / c;
            let y0 = row * h / r;
            let y1 = (row + 1) * h / r;
            out.push(Rect::new(x0 + m, y0 + m, (x1 - m).max(x0 + m), (y1 - m).max(y0 + m)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        assert_eq!(layout_grid(36).unwrap(), (6, 6));
        assert_eq!(layout_grid(1).unwrap(), (1, 1));
        assert_eq!(layout_grid(10).unwrap(), (3, 4));
        assert_eq!(layout_grid(12).unwrap(), (3, 4));
        assert_eq!(layout_grid(17).unwrap(), (4, 5));
        assert!(layout_grid(0).is_err());
    }

    #[test]
    fn panels_are_disjoint_and_inside() {
        let rects = panel_rects(384, 384, 6, 6, 2);
        assert_eq!(rects.len(), 36);
        assert_eq!(rects[0], Rect::new(2, 2, 62, 62));
        for (i, a) in rects.iter().enumerate() {
            assert!(a.x0 >= 0 && a.y0 >= 0 && a.x1 <= 384 && a.y1 <= 384);
            for b in &rects[i + 1..] {
                let inter = a.intersect(b);
                assert!(inter.width() == 0 || inter.height() == 0);
            }
        }
    }
}
