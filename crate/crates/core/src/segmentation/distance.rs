//! Exact Euclidean distance transform (separable lower-envelope method).

use alloc::vec;
use alloc::vec::Vec;

const INF: f64 = 1e20;

/// Squared distance transform of a 1-D sampled function, written into `out`.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Distance from every foreground pixel to the nearest background pixel.
///
/// Background pixels get 0. Everything outside the raster counts as
/// background.
pub fn distance_transform(width: usize, height: usize, mask: &[bool]) -> Vec<f64> {
    debug_assert_eq!(mask.len(), width * height);
    let (pw, ph) = (width + 2, height + 2);
    let mut grid = vec![0.0; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                grid[(y + 1) * pw + x + 1] = INF;
            }
        }
    }

    let n = pw.max(ph);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        f[..pw].copy_from_slice(row);
        edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        row.copy_from_slice(&out[..pw]);
    }

    let mut dist = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            dist[y * width + x] = libm::sqrt(grid[(y + 1) * pw + x + 1]);
        }
    }
    dist
}
