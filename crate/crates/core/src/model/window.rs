//! Non-overlapping window partitioning of a square patch grid, with cyclic shift.

use crate::error::{Error, Result};

/// Rolls a row-major `g × g` grid so that cell `(r, c)` lands at `(r - s, c - s)` mod `g`.
pub fn cyclic_shift<T: Clone>(grid: &[T], g: usize, s: usize) -> Vec<T> {
    roll(grid, g, g - s % g)
}

/// Inverse of [`cyclic_shift`].
pub fn cyclic_unshift<T: Clone>(grid: &[T], g: usize, s: usize) -> Vec<T> {
    roll(grid, g, s % g)
}

fn roll<T: Clone>(grid: &[T], g: usize, k: usize) -> Vec<T> {
    assert_eq!(grid.len(), g * g, "grid length must be g*g");
    (0..g * g)
        .map(|i| {
            let (r, c) = (i / g, i % g);
            grid[((r + g - k % g) % g) * g + (c + g - k % g) % g].clone()
        })
        .collect()
}

/// Splits a `g × g` grid into `(g / w)²` windows of `w²` cells, each row-major.
pub fn window_partition<T: Clone>(grid: &[T], g: usize, w: usize) -> Result<Vec<Vec<T>>> {
    check(grid.len(), g, w)?;
    let nw = g / w;
    let mut out = Vec::with_capacity(nw * nw);
    for wr in 0..nw {
        for wc in 0..nw {
            let mut win = Vec::with_capacity(w * w);
            for r in 0..w {
                for c in 0..w {
                    win.push(grid[(wr * w + r) * g + wc * w + c].clone());
                }
            }
            out.push(win);
        }
    }
    Ok(out)
}

/// Reassembles windows produced by [`window_partition`].
pub fn window_reverse<T: Clone>(windows: &[Vec<T>], g: usize, w: usize) -> Result<Vec<T>> {
    let nw = g / w;
    if w == 0 || g % w != 0 || windows.len() != nw * nw || windows.iter().any(|v| v.len() != w * w) {
        return Err(Error::Shape(format!("cannot reassemble {} windows into a {g}x{g} grid with w={w}", windows.len())));
    }
    let mut slots: Vec<Option<T>> = vec![None; g * g];
    for (k, win) in windows.iter().enumerate() {
        let (wr, wc) = (k / nw, k % nw);
        for (j, v) in win.iter().enumerate() {
            slots[(wr * w + j / w) * g + wc * w + j % w] = Some(v.clone());
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("every cell is covered")).collect())
}

fn check(len: usize, g: usize, w: usize) -> Result<()> {
    if len != g * g {
        return Err(Error::Shape(format!("grid of {len} cells is not {g}x{g}")));
    }
    if w == 0 || g % w != 0 {
        return Err(Error::Shape(format!("window {w} does not divide grid side {g}")));
    }
    Ok(())
}

/// Window id of every patch after shifting by `shift`, in original row-major order.
pub fn window_assignment(g: usize, w: usize, shift: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..g * g).collect();
    let shifted = cyclic_shift(&idx, g, shift);
    let windows = window_partition(&shifted, g, w)?;
    let mut assign = vec![0; g * g];
    for (k, win) in windows.iter().enumerate() {
        for &p in win {
            assign[p] = k;
        }
    }
    Ok(assign)
}
