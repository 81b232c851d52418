use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{class_quotas, validate_mixture, Palette};
use crate::albedo::CLASSES;
use crate::error::{Error, Result};
use crate::image::{Image, DEFAULT_CROP_H, DEFAULT_CROP_W};
use crate::meta::PointAnnotation;
use crate::segmentation::{BerryInstance, SegmentationMask};

/// Placement tries per berry before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

const LEAF: [f64; 3] = [0.14, 0.30, 0.10];
const LEAF_CELL: f64 = 48.0;
const SUPERSAMPLE: usize = 4;
/// Minimum free space between berries that do not overlap.
const GAP: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_berries: usize,
    /// Semi-major axis range in pixels.
    pub radius_range: (f64, f64),
    pub class_mixture: [f64; CLASSES],
    /// Total per-channel color deviation from the palette.
    pub jitter: f64,
    /// Upper bound on the share of berries involved in an overlap.
    pub occlusion_rate: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: DEFAULT_CROP_W,
            height: DEFAULT_CROP_H,
            n_berries: 120,
            radius_range: (5.0, 9.0),
            class_mixture: [0.2; CLASSES],
            jitter: 0.03,
            occlusion_rate: 0.1,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Default scene with 80 to 160 berries chosen by `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            n_berries: rng.random_range(80..=160),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_mixture(&self.class_mixture)?;
        let (r0, r1) = self.radius_range;
        if !(r0 >= 1.0 && r1 >= r0 && r1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "radius range ({r0}, {r1}) must satisfy 1 <= min <= max"
            )));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::InvalidParameter(format!(
                "jitter {} not in [0, 0.5]",
                self.jitter
            )));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return Err(Error::InvalidParameter(format!(
                "occlusion rate {} not in [0, 1]",
                self.occlusion_rate
            )));
        }
        let margin = 2.0 * (r1 + 1.0);
        if (self.width as f64) <= margin || (self.height as f64) <= margin {
            return Err(Error::InvalidParameter(format!(
                "{}x{} scene too small for radius {r1}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerrySpec {
    /// Center pixel; the ellipse is centered on its midpoint.
    pub center: (u32, u32),
    /// Semi-major axis.
    pub radius: f64,
    /// Minor over major axis.
    pub aspect: f64,
    /// Major-axis angle in radians.
    pub angle: f64,
    pub class: u8,
    pub base_rgb: [f64; 3],
    /// Index of the berry this one overlaps, if any.
    pub occludes: Option<usize>,
}

impl BerrySpec {
    fn contains(&self, px: f64, py: f64) -> bool {
        let dx = px - (f64::from(self.center.0) + 0.5);
        let dy = py - (f64::from(self.center.1) + 0.5);
        let (s, c) = (libm::sin(self.angle), libm::cos(self.angle));
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let b = self.radius * self.aspect;
        (u * u) / (self.radius * self.radius) + (v * v) / (b * b) <= 1.0
    }

    fn coverage(&self, x: usize, y: usize) -> f64 {
        let step = 1.0 / SUPERSAMPLE as f64;
        let mut inside = 0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let px = x as f64 + (sx as f64 + 0.5) * step;
                let py = y as f64 + (sy as f64 + 0.5) * step;
                if self.contains(px, py) {
                    inside += 1;
                }
            }
        }
        f64::from(inside) / (SUPERSAMPLE * SUPERSAMPLE) as f64
    }

    fn center_distance(&self, other: &BerrySpec) -> f64 {
        let dx = f64::from(self.center.0) - f64::from(other.center.0);
        let dy = f64::from(self.center.1) - f64::from(other.center.1);
        libm::sqrt(dx * dx + dy * dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: Image,
    /// Instance `i` is berry `i`.
    pub truth_mask: SegmentationMask,
    pub points: PointAnnotation,
    pub berry_specs: Vec<BerrySpec>,
    pub seed: u64,
}

impl SyntheticScene {
    /// Painted classes of the truth instances.
    pub fn classes(&self) -> Vec<u8> {
        self.berry_specs.iter().map(|b| b.class).collect()
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for b in &self.berry_specs {
            counts[b.class as usize - 1] += 1;
        }
        counts
    }
}

/// Smooth random field in `[lo, hi]` with features about `cell` pixels wide.
fn value_noise(w: usize, h: usize, cell: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (w as f64 / cell) as usize + 2;
    let gh = (h as f64 / cell) as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(lo..=hi)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let fy = y as f64 / cell;
        let (gy, ty) = (fy as usize, smooth(fy - libm::floor(fy)));
        for x in 0..w {
            let fx = x as f64 / cell;
            let (gx, tx) = (fx as usize, smooth(fx - libm::floor(fx)));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(gx, gy) * (1.0 - tx) + at(gx + 1, gy) * tx;
            let bottom = at(gx, gy + 1) * (1.0 - tx) + at(gx + 1, gy + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

/// 4-connected pixels with `owner == id` reachable from `seed`.
fn owned_component(
    owner: &[u32],
    w: usize,
    h: usize,
    id: u32,
    seed: (u32, u32),
) -> Option<Vec<(u32, u32)>> {
    let at = |x: u32, y: u32| y as usize * w + x as usize;
    if owner[at(seed.0, seed.1)] != id {
        return None;
    }
    let mut seen = alloc::collections::BTreeSet::new();
    let mut stack = vec![seed];
    seen.insert(seed);
    while let Some((x, y)) = stack.pop() {
        let mut visit = |nx: u32, ny: u32| {
            if owner[at(nx, ny)] == id && seen.insert((nx, ny)) {
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if (x as usize) + 1 < w {
            visit(x + 1, y);
        }
        if (y as usize) + 1 < h {
            visit(x, y + 1);
        }
    }
    Some(seen.into_iter().collect())
}

fn place(
    spec: &SceneSpec,
    rng: &mut ChaCha8Rng,
    placed: &[BerrySpec],
    index: usize,
    target: Option<usize>,
) -> Result<BerrySpec> {
    let (r0, r1) = spec.radius_range;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let radius = if r1 > r0 {
            rng.random_range(r0..=r1)
        } else {
            r0
        };
        let aspect = rng.random_range(0.85..=1.0);
        let angle = rng.random_range(0.0..core::f64::consts::PI);
        let margin = radius + 1.0;
        let center = match target {
            None => {
                let x = rng.random_range(margin..spec.width as f64 - margin);
                let y = rng.random_range(margin..spec.height as f64 - margin);
                (x as u32, y as u32)
            }
            Some(j) => {
                let other = &placed[j];
                let lo = radius.max(other.radius) + 1.0;
                let hi = 0.85 * (radius * aspect + other.radius * other.aspect);
                let d = if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                };
                let t = rng.random_range(0.0..core::f64::consts::TAU);
                let x = f64::from(other.center.0) + 0.5 + d * libm::cos(t);
                let y = f64::from(other.center.1) + 0.5 + d * libm::sin(t);
                if x < margin
                    || y < margin
                    || x > spec.width as f64 - margin
                    || y > spec.height as f64 - margin
                {
                    continue;
                }
                (x as u32, y as u32)
            }
        };
        let candidate = BerrySpec {
            center,
            radius,
            aspect,
            angle,
            class: 1,
            base_rgb: [0.0; 3],
            occludes: target,
        };
        let clear = placed.iter().enumerate().all(|(k, b)| {
            let d = candidate.center_distance(b);
            if Some(k) == target {
                d >= radius.max(b.radius) + 1.0
            } else {
                d >= radius + b.radius + GAP
            }
        });
        if clear {
            return Ok(candidate);
        }
    }
    Err(Error::PlacementFailed {
        index,
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })
}

/// Render a scene: leaf-textured background, anti-aliased elliptical
/// berries painted from `palette`, the truth mask and one point per berry.
///
/// Truth pixels are those at least half covered by their berry. Overlapping
/// berries are drawn after the one they overlap; each truth instance keeps
/// only the 4-connected part containing its center.
pub fn generate_scene(spec: &SceneSpec, palette: &Palette) -> Result<SyntheticScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n = spec.n_berries;
    let overlapping = libm::floor(spec.occlusion_rate * n as f64 / 2.0) as usize;
    let mut berries: Vec<BerrySpec> = Vec::with_capacity(n);
    for i in 0..n - overlapping {
        let b = place(spec, &mut rng, &berries, i, None)?;
        berries.push(b);
    }
    let mut free: Vec<usize> = (0..berries.len()).collect();
    for i in n - overlapping..n {
        let pick = rng.random_range(0..free.len());
        let target = free.swap_remove(pick);
        let b = place(spec, &mut rng, &berries, i, Some(target))?;
        berries.push(b);
    }

    let quotas = class_quotas(&spec.class_mixture, n);
    let mut classes: Vec<u8> = quotas
        .iter()
        .enumerate()
        .flat_map(|(c, &q)| core::iter::repeat(c as u8 + 1).take(q))
        .collect();
    classes.shuffle(&mut rng);
    let half = spec.jitter / 2.0;
    for (b, &class) in berries.iter_mut().zip(&classes) {
        b.class = class;
        let base = palette.color(class);
        b.base_rgb = core::array::from_fn(|c| {
            let j = if half > 0.0 {
                rng.random_range(-half..=half)
            } else {
                0.0
            };
            (base[c] + j).clamp(0.0, 1.0)
        });
    }

    let shade = value_noise(w, h, LEAF_CELL, 0.7, 1.3, &mut rng);
    let tint = value_noise(w, h, LEAF_CELL / 2.0, -0.03, 0.03, &mut rng);
    let mut rgb = vec![[0.0f64; 3]; w * h];
    for (i, px) in rgb.iter_mut().enumerate() {
        *px = core::array::from_fn(|c| {
            let t = if c == 1 { tint[i] } else { 0.0 };
            (LEAF[c] * shade[i] + t + rng.random_range(-0.01..=0.01)).clamp(0.0, 1.0)
        });
    }

    let mut owner = vec![0u32; w * h];
    for (k, b) in berries.iter().enumerate() {
        let r = libm::ceil(b.radius) as i64 + 1;
        let (cx, cy) = (i64::from(b.center.0), i64::from(b.center.1));
        for y in (cy - r).max(0)..=(cy + r).min(h as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as i64 - 1) {
                let (x, y) = (x as usize, y as usize);
                let cov = b.coverage(x, y);
                if cov == 0.0 {
                    continue;
                }
                let i = y * w + x;
                for c in 0..3 {
                    let j = if half > 0.0 {
                        rng.random_range(-half..=half)
                    } else {
                        0.0
                    };
                    let v = (b.base_rgb[c] + j).clamp(0.0, 1.0);
                    rgb[i][c] = cov * v + (1.0 - cov) * rgb[i][c];
                }
                if cov >= 0.5 {
                    owner[i] = k as u32 + 1;
                }
            }
        }
    }

    let data: Vec<f32> = rgb.iter().flatten().map(|&v| v as f32).collect();
    let image = Image::new(w, h, data)?.with_calibrated(true);

    let mut instances = Vec::with_capacity(n);
    for (k, b) in berries.iter().enumerate() {
        let part = owned_component(&owner, w, h, k as u32 + 1, b.center).ok_or_else(|| {
            Error::InconsistentMask(format!("berry {k} does not cover its center"))
        })?;
        instances.push(BerryInstance::from_pixels(part, Some(&image)));
    }
    let truth_mask = SegmentationMask::from_instances(w, h, instances)?;
    let points = PointAnnotation {
        image_id: String::from("scene"),
        points: berries.iter().map(|b| b.center).collect(),
    };

    Ok(SyntheticScene {
        image,
        truth_mask,
        points,
        berry_specs: berries,
        seed: spec.seed,
    })
}
