//! Point-supervised berry instance segmentation.
//!
//! A logistic [`PixelScorer`] trained on [`PseudoMask`]s localizes berry
//! pixels. Instance logic on top enforces the two shape priors: blobs must
//! be round (convexity at least `kappa`) and merged blobs are split apart
//! by a distance-transform watershed.

pub mod components;
pub mod distance;
pub mod eval;
pub mod hull;
pub mod pseudo_mask;
pub mod scorer;
pub mod watershed;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use components::label_components;
pub use eval::{evaluate, EvalReport, ImageEval};
pub use hull::convexity;
pub use pseudo_mask::{build_pseudo_mask, PseudoLabel, PseudoMask};
pub use scorer::{train_scorer, PixelScorer, TrainConfig};
pub use watershed::{split_region, MIN_SEED_SEPARATION};

use crate::error::{Error, Result};
use crate::image::Image;

/// Tunables for pseudo-mask generation and instance extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegParams {
    /// Score threshold for foreground.
    pub tau: f64,
    /// Minimum convexity of an emitted instance.
    pub kappa: f64,
    /// Minimum instance area in pixels.
    pub min_area: usize,
    /// Pseudo-mask foreground disk radius.
    pub r_fg: u32,
    /// Pseudo-mask ignore annulus width.
    pub r_ig: u32,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            kappa: 0.8,
            min_area: 30,
            r_fg: 6,
            r_ig: 4,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau {} not in (0, 1)",
                self.tau
            )));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa {} not in (0, 1]",
                self.kappa
            )));
        }
        if self.r_fg < 1 {
            return Err(Error::InvalidParameter("r_fg must be at least 1".into()));
        }
        Ok(())
    }
}

/// One segmented berry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryInstance {
    /// Pixels in raster order.
    pub pixel_set: Vec<(u32, u32)>,
    pub centroid: (f64, f64),
    pub area: usize,
    pub convexity: f64,
    pub mean_rgb: [f64; 3],
}

impl BerryInstance {
    /// Build from a pixel set; `image` supplies the mean color when given.
    pub fn from_pixels(mut pixel_set: Vec<(u32, u32)>, image: Option<&Image>) -> Self {
        pixel_set.sort_unstable_by_key(|&(x, y)| (y, x));
        let n = pixel_set.len().max(1) as f64;
        let (sx, sy) = pixel_set.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
            (sx + f64::from(x), sy + f64::from(y))
        });
        let mut mean_rgb = [0.0; 3];
        if let Some(img) = image {
            for &(x, y) in &pixel_set {
                let p = img.pixel(x as usize, y as usize);
                for c in 0..3 {
                    mean_rgb[c] += f64::from(p[c]);
                }
            }
            mean_rgb = mean_rgb.map(|v| v / n);
        }
        Self {
            convexity: convexity(&pixel_set),
            area: pixel_set.len(),
            centroid: (sx / n, sy / n),
            mean_rgb,
            pixel_set,
        }
    }
}

/// Instance-id raster plus the instance table it was built from.
///
/// Id `0` is background; instance `i` in the table carries id `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    instances: Vec<BerryInstance>,
}

impl SegmentationMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ids: vec![0; width * height],
            instances: Vec::new(),
        }
    }

    /// Rasterize an instance table. Instances must be disjoint and in bounds.
    pub fn from_instances(
        width: usize,
        height: usize,
        instances: Vec<BerryInstance>,
    ) -> Result<Self> {
        let mut ids = vec![0u32; width * height];
        for (k, inst) in instances.iter().enumerate() {
            for &(x, y) in &inst.pixel_set {
                if x as usize >= width || y as usize >= height {
                    return Err(Error::InconsistentMask(format!(
                        "instance {} pixel ({x}, {y}) out of bounds",
                        k + 1
                    )));
                }
                let slot = &mut ids[y as usize * width + x as usize];
                if *slot != 0 {
                    return Err(Error::InconsistentMask(format!(
                        "pixel ({x}, {y}) claimed by instances {} and {}",
                        *slot,
                        k + 1
                    )));
                }
                *slot = k as u32 + 1;
            }
        }
        Ok(Self {
            width,
            height,
            ids,
            instances,
        })
    }

    /// Rebuild the instance table from an id raster. Ids need not be dense;
    /// they are renumbered in ascending order of the original id.
    pub fn from_id_raster(
        width: usize,
        height: usize,
        raster: &[u32],
        image: Option<&Image>,
    ) -> Result<Self> {
        if raster.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "raster has {} ids for a {width}x{height} mask",
                raster.len()
            )));
        }
        let mut groups: alloc::collections::BTreeMap<u32, Vec<(u32, u32)>> = Default::default();
        for (i, &id) in raster.iter().enumerate() {
            if id != 0 {
                groups
                    .entry(id)
                    .or_default()
                    .push(((i % width) as u32, (i / width) as u32));
            }
        }
        let instances = groups
            .into_values()
            .map(|px| BerryInstance::from_pixels(px, image))
            .collect();
        Self::from_instances(width, height, instances)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn instances(&self) -> &[BerryInstance] {
        &self.instances
    }

    pub fn foreground_pixels(&self) -> usize {
        self.ids.iter().filter(|&&id| id != 0).count()
    }

    /// Check that the instance table exactly tiles the nonzero ids.
    pub fn verify(&self) -> Result<()> {
        let rebuilt = Self::from_instances(self.width, self.height, self.instances.clone())?;
        if rebuilt.ids != self.ids {
            return Err(Error::InconsistentMask(
                "instance table does not reproduce id raster".into(),
            ));
        }
        Ok(())
    }
}

/// Number of berries in a mask.
pub fn count(mask: &SegmentationMask) -> usize {
    mask.instances.len()
}

/// Foreground decision per pixel.
pub fn threshold(scores: &[f64], tau: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= tau).collect()
}

/// Turn a binary foreground map into instances: connected components, area
/// filter, watershed split of non-convex blobs, and a final convexity gate.
pub fn instances_from_foreground(
    image: &Image,
    foreground: &[bool],
    params: &SegParams,
) -> Result<SegmentationMask> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    if foreground.len() != w * h {
        return Err(Error::ShapeMismatch(format!(
            "foreground map has {} pixels, image has {}",
            foreground.len(),
            w * h
        )));
    }
    let mut kept = Vec::new();
    for component in label_components(w, h, foreground) {
        if component.len() < params.min_area {
            continue;
        }
        if convexity(&component) >= params.kappa {
            kept.push(BerryInstance::from_pixels(component, Some(image)));
            continue;
        }
        for part in split_region(&component, MIN_SEED_SEPARATION) {
            if part.len() < params.min_area {
                continue;
            }
            let inst = BerryInstance::from_pixels(part, Some(image));
            if inst.convexity >= params.kappa {
                kept.push(inst);
            }
        }
    }
    kept.sort_by(|a, b| {
        a.centroid
            .1
            .total_cmp(&b.centroid.1)
            .then(a.centroid.0.total_cmp(&b.centroid.0))
    });
    SegmentationMask::from_instances(w, h, kept)
}

/// Segment berries in a calibrated crop.
pub fn segment(
    image: &Image,
    scorer: &PixelScorer,
    params: &SegParams,
) -> Result<SegmentationMask> {
    if !scorer.trained {
        return Err(Error::UntrainedScorer);
    }
    let scores = scorer.score_map(image);
    instances_from_foreground(image, &threshold(&scores, params.tau), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Rgb;

    const RED: Rgb = [0.75, 0.2, 0.2];
    const LEAF: Rgb = [0.15, 0.32, 0.12];

    fn paint_disk(img: &mut Image, cx: f64, cy: f64, r: f64, color: Rgb) {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    img.set_pixel(x, y, color);
                }
            }
        }
    }

    /// Hand-set scorer: foreground when red exceeds 0.45.
    fn red_scorer() -> PixelScorer {
        PixelScorer {
            weights: [-9.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            trained: true,
            training_loss_history: vec![],
        }
    }

    #[test]
    fn five_disjoint_disks() {
        let mut img = Image::filled(120, 80, LEAF).unwrap();
        let centers = [
            (15.0, 15.0),
            (60.0, 20.0),
            (100.0, 15.0),
            (30.0, 60.0),
            (90.0, 60.0),
        ];
        for (cx, cy) in centers {
            paint_disk(&mut img, cx, cy, 8.0, RED);
        }
        let mask = segment(&img, &red_scorer(), &SegParams::default()).unwrap();
        assert_eq!(count(&mask), 5);
        for inst in mask.instances() {
            assert!(inst.convexity >= 0.95);
            assert!((inst.mean_rgb[0] - 0.75).abs() < 1e-6);
        }
        mask.verify().unwrap();
        // raster order of centroids
        let ys: Vec<f64> = mask.instances().iter().map(|i| i.centroid.1).collect();
        assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn blank_image_has_no_instances() {
        let img = Image::filled(50, 40, LEAF).unwrap();
        let mask = segment(&img, &red_scorer(), &SegParams::default()).unwrap();
        assert_eq!(count(&mask), 0);
        assert_eq!(count(&SegmentationMask::empty(3, 3)), 0);
    }

    #[test]
    fn untrained_scorer_is_rejected() {
        let img = Image::filled(10, 10, LEAF).unwrap();
        assert_eq!(
            segment(&img, &PixelScorer::default(), &SegParams::default()),
            Err(Error::UntrainedScorer)
        );
    }

    #[test]
    fn non_convex_blob_is_split_and_parts_gated() {
        // two overlapping disks 1.5 radii apart, forced through the split path
        let mut img = Image::filled(80, 50, LEAF).unwrap();
        paint_disk(&mut img, 25.0, 25.0, 8.0, RED);
        paint_disk(&mut img, 37.0, 25.0, 8.0, RED);
        let strict = SegParams {
            kappa: 0.99,
            ..SegParams::default()
        };
        let mask = segment(&img, &red_scorer(), &strict).unwrap();
        assert_eq!(count(&mask), 2);
        for inst in mask.instances() {
            assert!(inst.convexity >= strict.kappa);
        }
        let loose = segment(&img, &red_scorer(), &SegParams::default()).unwrap();
        assert_eq!(count(&loose), 1);
    }

    #[test]
    fn small_components_are_dropped() {
        let mut img = Image::filled(40, 40, LEAF).unwrap();
        paint_disk(&mut img, 10.0, 10.0, 2.0, RED);
        paint_disk(&mut img, 28.0, 28.0, 6.0, RED);
        let mask = segment(&img, &red_scorer(), &SegParams::default()).unwrap();
        assert_eq!(count(&mask), 1);
        assert!(mask.instances()[0].area >= 30);
    }

    #[test]
    fn id_raster_round_trip() {
        let raster = vec![0, 5, 5, 0, 9, 0, 9, 9, 0];
        let mask = SegmentationMask::from_id_raster(3, 3, &raster, None).unwrap();
        assert_eq!(count(&mask), 2);
        assert_eq!(mask.ids(), &[0, 1, 1, 0, 2, 0, 2, 2, 0]);
        mask.verify().unwrap();
    }

    #[test]
    fn overlapping_instances_are_inconsistent() {
        let a = BerryInstance::from_pixels(vec![(0, 0), (1, 0)], None);
        let b = BerryInstance::from_pixels(vec![(1, 0)], None);
        assert!(SegmentationMask::from_instances(3, 3, vec![a, b]).is_err());
    }

    fn blob_image(disks: &[(f64, f64, f64)]) -> Image {
        let mut img = Image::filled(64, 64, LEAF).unwrap();
        for &(cx, cy, r) in disks {
            paint_disk(&mut img, cx, cy, r, RED);
        }
        img
    }

    proptest::proptest! {
        #[test]
        fn emitted_instances_meet_kappa(
            disks in proptest::collection::vec((4.0f64..60.0, 4.0f64..60.0, 3.0f64..10.0), 1..8),
            kappa in 0.5f64..1.0,
        ) {
            let img = blob_image(&disks);
            let params = SegParams { kappa, ..SegParams::default() };
            let mask = segment(&img, &red_scorer(), &params).unwrap();
            mask.verify().unwrap();
            for inst in mask.instances() {
                proptest::prop_assert!(inst.convexity >= kappa);
                proptest::prop_assert!(inst.area >= params.min_area);
            }
        }

        #[test]
        fn foreground_shrinks_as_tau_rises(
            scores in proptest::collection::vec(0.0f64..1.0, 1..400),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let loose = threshold(&scores, lo);
            let tight = threshold(&scores, hi);
            for (l, t) in loose.iter().zip(&tight) {
                proptest::prop_assert!(!t || *l);
            }
        }
    }
}
