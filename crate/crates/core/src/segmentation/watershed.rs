//! Marker-controlled watershed on the distance transform, used to split
//! merged blobs into round parts.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::components::bounds;
use super::distance::distance_transform;

/// Minimum distance between two watershed seeds, in pixels.
pub const MIN_SEED_SEPARATION: f64 = 4.0;

#[derive(PartialEq)]
struct Entry {
    height: f64,
    order: u64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.height
            .total_cmp(&other.height)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Local maxima of the distance map inside the region, thinned greedily so
/// no two seeds are closer than `min_separation`. Stronger maxima win; ties
/// go to the earlier pixel in raster order. Seeds are local coordinates.
fn seeds(w: usize, h: usize, mask: &[bool], dist: &[f64], min_separation: f64) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..w * h)
        .filter(|&i| {
            if !mask[i] {
                return false;
            }
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if dist[ny as usize * w + nx as usize] > dist[i] {
                        return false;
                    }
                }
            }
            true
        })
        .collect();
    candidates.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));

    let sep2 = min_separation * min_separation;
    let mut chosen: Vec<usize> = Vec::new();
    for c in candidates {
        let (cx, cy) = ((c % w) as f64, (c / w) as f64);
        let clear = chosen.iter().all(|&s| {
            let (sx, sy) = ((s % w) as f64, (s / w) as f64);
            (sx - cx) * (sx - cx) + (sy - cy) * (sy - cy) >= sep2
        });
        if clear {
            chosen.push(c);
        }
    }
    chosen
}

/// Split a pixel region into watershed basins of its distance transform.
///
/// Returns one pixel list per seed, each in raster order and 4-connected.
/// A region with a single seed comes back unchanged.
pub fn split_region(pixels: &[(u32, u32)], min_separation: f64) -> Vec<Vec<(u32, u32)>> {
    if pixels.is_empty() {
        return Vec::new();
    }
    let (min_x, min_y, w, h) = bounds(pixels);
    let mut mask = vec![false; w * h];
    for &(x, y) in pixels {
        mask[(y - min_y) as usize * w + (x - min_x) as usize] = true;
    }
    let dist = distance_transform(w, h, &mask);
    let seeds = seeds(w, h, &mask, &dist, min_separation);
    if seeds.len() <= 1 {
        let mut same = pixels.to_vec();
        same.sort_unstable_by_key(|&(x, y)| (y, x));
        return vec![same];
    }

    let mut label = vec![0u32; w * h];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    for (k, &s) in seeds.iter().enumerate() {
        label[s] = k as u32 + 1;
        heap.push(Entry {
            height: dist[s],
            order,
            index: s,
        });
        order += 1;
    }
    while let Some(Entry { index, .. }) = heap.pop() {
        let (x, y) = (index % w, index / w);
        let mut neighbours = [usize::MAX; 4];
        if x > 0 {
            neighbours[0] = index - 1;
        }
        if x + 1 < w {
            neighbours[1] = index + 1;
        }
        if y > 0 {
            neighbours[2] = index - w;
        }
        if y + 1 < h {
            neighbours[3] = index + w;
        }
        for n in neighbours {
            if n != usize::MAX && mask[n] && label[n] == 0 {
                label[n] = label[index];
                heap.push(Entry {
                    height: dist[n],
                    order,
                    index: n,
                });
                order += 1;
            }
        }
    }

    let mut parts = vec![Vec::new(); seeds.len()];
    for y in 0..h {
        for x in 0..w {
            let l = label[y * w + x];
            if l > 0 {
                parts[l as usize - 1].push((x as u32 + min_x, y as u32 + min_y));
            }
        }
    }
    parts.retain(|p| !p.is_empty());
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::components::is_four_connected;

    fn disk_at(cx: f64, cy: f64, r: f64, out: &mut Vec<(u32, u32)>) {
        let span = r.ceil() as i64 + 1;
        for y in (cy as i64 - span)..=(cy as i64 + span) {
            for x in (cx as i64 - span)..=(cx as i64 + span) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    out.push((x as u32, y as u32));
                }
            }
        }
    }

    fn union(a: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
        let mut a = a;
        a.sort_unstable_by_key(|&(x, y)| (y, x));
        a.dedup();
        a
    }

    #[test]
    fn overlapping_disks_split_in_two() {
        for r in [6.0, 8.0, 10.0] {
            let mut px = Vec::new();
            disk_at(30.0, 30.0, r, &mut px);
            disk_at(30.0 + 1.5 * r, 30.0, r, &mut px);
            let px = union(px);
            let parts = split_region(&px, MIN_SEED_SEPARATION);
            assert_eq!(parts.len(), 2, "radius {r}");
            assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), px.len());
            for p in &parts {
                assert!(is_four_connected(p));
                let share = p.len() as f64 / px.len() as f64;
                assert!((0.4..=0.6).contains(&share), "share {share}");
            }
        }
    }

    #[test]
    fn single_disk_stays_whole() {
        let mut px = Vec::new();
        disk_at(20.0, 20.0, 9.0, &mut px);
        let px = union(px);
        let parts = split_region(&px, MIN_SEED_SEPARATION);
        assert_eq!(parts, vec![px]);
    }

    #[test]
    fn deterministic() {
        let mut px = Vec::new();
        disk_at(20.0, 20.0, 7.0, &mut px);
        disk_at(30.0, 24.0, 6.0, &mut px);
        disk_at(26.0, 12.0, 5.0, &mut px);
        let px = union(px);
        assert_eq!(
            split_region(&px, MIN_SEED_SEPARATION),
            split_region(&px, MIN_SEED_SEPARATION)
        );
    }
}
