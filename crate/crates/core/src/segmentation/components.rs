//! 4-connected component labeling of binary masks.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// Label 4-connected foreground regions.
///
/// Components are returned in raster order of their first pixel; each
/// component's pixels are in raster order.
pub fn label_components(width: usize, height: usize, mask: &[bool]) -> Vec<Vec<(u32, u32)>> {
    debug_assert_eq!(mask.len(), width * height);
    let mut seen = vec![false; mask.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            pixels.push((x as u32, y as u32));
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        components.push(pixels);
    }
    components
}

/// True when the pixel set forms a single 4-connected region.
pub fn is_four_connected(pixels: &[(u32, u32)]) -> bool {
    if pixels.is_empty() {
        return false;
    }
    let (min_x, min_y, w, h) = bounds(pixels);
    let mut mask = vec![false; w * h];
    for &(x, y) in pixels {
        mask[(y - min_y) as usize * w + (x - min_x) as usize] = true;
    }
    label_components(w, h, &mask).len() == 1
}

/// `(min_x, min_y, width, height)` of a non-empty pixel set.
pub fn bounds(pixels: &[(u32, u32)]) -> (u32, u32, usize, usize) {
    let min_x = pixels.iter().map(|p| p.0).min().unwrap_or(0);
    let max_x = pixels.iter().map(|p| p.0).max().unwrap_or(0);
    let min_y = pixels.iter().map(|p| p.1).min().unwrap_or(0);
    let max_y = pixels.iter().map(|p| p.1).max().unwrap_or(0);
    (
        min_x,
        min_y,
        (max_x - min_x + 1) as usize,
        (max_y - min_y + 1) as usize,
    )
}
