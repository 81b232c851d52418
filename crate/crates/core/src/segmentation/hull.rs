//! Convex hull of pixel centers and the convexity score built on it.

use alloc::vec::Vec;

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain. Returns hull vertices counter-clockwise with
/// collinear points removed; fewer than three vertices means the input is
/// degenerate.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Twice the signed shoelace area of a polygon.
pub fn twice_area(poly: &[(i64, i64)]) -> i64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum()
}

/// Pixel area over convex-hull area, in `(0, 1]`.
///
/// The hull is taken over pixel centers and its shoelace area is padded by
/// one square pixel to compensate for the half-pixel border the centers
/// lose. Collinear or tiny sets score 1.
pub fn convexity(pixels: &[(u32, u32)]) -> f64 {
    if pixels.len() < 3 {
        return 1.0;
    }
    let pts: Vec<(i64, i64)> = pixels
        .iter()
        .map(|&(x, y)| (i64::from(x), i64::from(y)))
        .collect();
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return 1.0;
    }
    let hull_area = twice_area(&hull).abs() as f64 / 2.0 + 1.0;
    (pixels.len() as f64 / hull_area).min(1.0)
}
