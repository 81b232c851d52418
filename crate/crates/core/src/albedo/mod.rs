//! Five-class green-to-red albedo model.
//!
//! Berry pixels are clustered in calibrated RGB, the raw clusters are
//! ordered by redness and folded into five contiguous classes, and each
//! berry takes the class most of its pixels are nearest to.

pub mod kmeans;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::meta::{CaptureMeta, Variety};
use crate::segmentation::{BerryInstance, SegmentationMask};
use kmeans::{dist2, kmeans, nearest, partition_sorted_1d};

pub const CLASSES: usize = 5;
pub const DEFAULT_K: usize = 10;
const REDNESS_EPS: f64 = 1e-6;

/// Redness index `R / (R + G + B + eps)`.
#[inline]
pub fn redness(rgb: &[f64; 3]) -> f64 {
    rgb[0] / (rgb[0] + rgb[1] + rgb[2] + REDNESS_EPS)
}

/// Draw `n` berry pixels uniformly without replacement across every
/// instance of every mask. Returns all pixels (with a warning) when fewer
/// than `n` exist.
pub fn sample_berry_pixels(
    masks: &[SegmentationMask],
    images: &[Image],
    n: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    if masks.len() != images.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} masks vs {} images",
            masks.len(),
            images.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample size must be at least 1".into(),
        ));
    }
    let mut locations: Vec<(usize, u32, u32)> = Vec::new();
    for (k, (mask, image)) in masks.iter().zip(images).enumerate() {
        if mask.width() != image.width() || mask.height() != image.height() {
            return Err(Error::ShapeMismatch(format!(
                "mask {k} is {}x{}, image is {}x{}",
                mask.width(),
                mask.height(),
                image.width(),
                image.height()
            )));
        }
        for inst in mask.instances() {
            locations.extend(inst.pixel_set.iter().map(|&(x, y)| (k, x, y)));
        }
    }
    let color =
        |&(k, x, y): &(usize, u32, u32)| images[k].pixel(x as usize, y as usize).map(f64::from);
    if locations.len() <= n {
        if locations.len() < n {
            log::warn!(
                "requested {n} berry pixels but only {} are available",
                locations.len()
            );
        }
        return Ok(locations.iter().map(color).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, locations.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| color(&locations[i])).collect())
}

/// Raw color clusters folded into five ordered albedo classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorClassModel {
    /// Raw cluster centers, sorted by ascending redness.
    pub centroids: Vec<[f64; 3]>,
    /// Pixels assigned to each raw cluster during fitting.
    pub cluster_sizes: Vec<usize>,
    /// Class (1..=5) of each raw centroid.
    pub class_map: Vec<u8>,
    /// Pixel-weighted mean color of each class, green first.
    pub class_centroids: [[f64; 3]; CLASSES],
    pub seed: u64,
    pub k: usize,
}

impl ColorClassModel {
    pub fn validate(&self) -> Result<()> {
        if self.centroids.len() != self.k
            || self.class_map.len() != self.k
            || self.cluster_sizes.len() != self.k
        {
            return Err(Error::InvalidColorModel(format!(
                "expected {} centroids, sizes and class labels",
                self.k
            )));
        }
        for class in 1..=CLASSES as u8 {
            if !self.class_map.contains(&class) {
                return Err(Error::InvalidColorModel(format!(
                    "class {class} has no centroid"
                )));
            }
        }
        if self
            .class_map
            .iter()
            .any(|&c| c == 0 || c as usize > CLASSES)
        {
            return Err(Error::InvalidColorModel("class label outside 1..=5".into()));
        }
        let rho: Vec<f64> = self.class_centroids.iter().map(redness).collect();
        if rho.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidColorModel(
                "class centroids are not strictly increasing in redness".into(),
            ));
        }
        Ok(())
    }

    /// Albedo class (1..=5) of a single color.
    pub fn classify_color(&self, rgb: &[f64; 3]) -> u8 {
        self.class_map[nearest(&self.centroids, rgb).0]
    }
}

/// Fit the albedo model: k-means in RGB, centroids sorted by redness, then
/// an optimal contiguous split of the sorted centroids into five classes
/// (1-D k-means on redness, weighted by cluster size).
pub fn build_color_model(pixels: &[[f64; 3]], k: usize, seed: u64) -> Result<ColorClassModel> {
    if k < CLASSES {
        return Err(Error::InvalidParameter(format!(
            "k must be at least {CLASSES}, got {k}"
        )));
    }
    let km = kmeans(pixels, k, seed)?;

    // centroids closer than this are the same colour up to rounding
    const SAME: f64 = 1e-18;
    let mut distinct: Vec<[f64; 3]> = Vec::with_capacity(k);
    for c in &km.centroids {
        if distinct.iter().all(|d| dist2(d, c) > SAME) {
            distinct.push(*c);
        }
    }
    if distinct.len() < CLASSES {
        return Err(Error::DegenerateColorModel {
            found: distinct.len(),
        });
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        redness(&km.centroids[a])
            .total_cmp(&redness(&km.centroids[b]))
            .then(a.cmp(&b))
    });
    let centroids: Vec<[f64; 3]> = order.iter().map(|&i| km.centroids[i]).collect();
    let cluster_sizes: Vec<usize> = order.iter().map(|&i| km.sizes[i]).collect();
    let rho: Vec<f64> = centroids.iter().map(redness).collect();
    let weights: Vec<f64> = cluster_sizes.iter().map(|&s| s.max(1) as f64).collect();
    let groups = partition_sorted_1d(&rho, &weights, CLASSES)?;
    let class_map: Vec<u8> = groups.iter().map(|&g| g as u8 + 1).collect();

    let mut sums = [[0.0; 3]; CLASSES];
    let mut totals = [0.0; CLASSES];
    for ((c, &g), &w) in centroids.iter().zip(&groups).zip(&weights) {
        for ch in 0..3 {
            sums[g][ch] += w * c[ch];
        }
        totals[g] += w;
    }
    let class_centroids: [[f64; 3]; CLASSES] =
        core::array::from_fn(|g| sums[g].map(|s| s / totals[g]));

    let model = ColorClassModel {
        centroids,
        cluster_sizes,
        class_map,
        class_centroids,
        seed,
        k,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryClassification {
    /// Index of the instance within its mask.
    pub instance: usize,
    pub class: u8,
    pub vote_fractions: [f64; CLASSES],
}

/// Majority vote of per-pixel nearest-centroid classes. Ties go to the
/// redder class.
pub fn classify_berry(
    instance: &BerryInstance,
    index: usize,
    image: &Image,
    model: &ColorClassModel,
) -> Result<BerryClassification> {
    if instance.pixel_set.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let mut votes = [0usize; CLASSES];
    for &(x, y) in &instance.pixel_set {
        if x as usize >= image.width() || y as usize >= image.height() {
            return Err(Error::ShapeMismatch(format!(
                "instance pixel ({x}, {y}) outside {}x{} image",
                image.width(),
                image.height()
            )));
        }
        let rgb = image.pixel(x as usize, y as usize).map(f64::from);
        votes[model.classify_color(&rgb) as usize - 1] += 1;
    }
    Ok(from_votes(index, votes))
}

fn from_votes(instance: usize, votes: [usize; CLASSES]) -> BerryClassification {
    let total = votes.iter().sum::<usize>() as f64;
    let mut best = 0;
    for c in 1..CLASSES {
        if votes[c] >= votes[best] {
            best = c;
        }
    }
    BerryClassification {
        instance,
        class: best as u8 + 1,
        vote_fractions: votes.map(|v| v as f64 / total),
    }
}

/// Classify every instance of a mask.
pub fn classify_mask(
    mask: &SegmentationMask,
    image: &Image,
    model: &ColorClassModel,
) -> Result<Vec<BerryClassification>> {
    mask.instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| classify_berry(inst, i, image, model))
        .collect()
}

/// Share of berries in each class for one bog on one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub bog_id: String,
    pub variety: Option<Variety>,
    pub date: NaiveDate,
    pub fractions: [f64; CLASSES],
    pub berry_count: usize,
}

impl ClassHistogram {
    pub fn from_counts(
        bog_id: impl Into<String>,
        variety: Option<Variety>,
        date: NaiveDate,
        counts: [usize; CLASSES],
    ) -> Self {
        let total: usize = counts.iter().sum();
        let fractions = if total == 0 {
            [0.0; CLASSES]
        } else {
            counts.map(|c| c as f64 / total as f64)
        };
        Self {
            bog_id: bog_id.into(),
            variety,
            date,
            fractions,
            berry_count: total,
        }
    }
}

/// Histogram of classes for berries captured under one `meta`.
pub fn class_histogram(
    classifications: &[BerryClassification],
    meta: &CaptureMeta,
) -> ClassHistogram {
    let mut counts = [0usize; CLASSES];
    for c in classifications {
        counts[c.class as usize - 1] += 1;
    }
    ClassHistogram::from_counts(meta.bog_id.clone(), Some(meta.variety), meta.date, counts)
}

/// Histogram over classifications gathered from several crops, each tagged
/// with its capture metadata. Rejects inputs spanning more than one bog or
/// date.
pub fn class_histogram_tagged(
    tagged: &[(&CaptureMeta, &BerryClassification)],
    meta: &CaptureMeta,
) -> Result<ClassHistogram> {
    for (m, _) in tagged {
        if m.bog_id != meta.bog_id || m.date != meta.date {
            return Err(Error::MixedHistogram(format!(
                "{} {} vs {} {}",
                m.bog_id, m.date, meta.bog_id, meta.date
            )));
        }
    }
    let flat: Vec<BerryClassification> = tagged.iter().map(|(_, c)| (*c).clone()).collect();
    Ok(class_histogram(&flat, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn meta(bog: &str, date: &str) -> CaptureMeta {
        CaptureMeta::new(
            bog,
            Variety::Stevens,
            crate::meta::parse_date(date).unwrap(),
            "f",
        )
        .unwrap()
    }

    fn classification(class: u8) -> BerryClassification {
        let mut votes = [0; CLASSES];
        votes[class as usize - 1] = 1;
        from_votes(0, votes)
    }

    const PALETTE: [[f64; 3]; 5] = [
        [0.60, 0.80, 0.40],
        [0.80, 0.75, 0.35],
        [0.85, 0.45, 0.35],
        [0.75, 0.20, 0.20],
        [0.50, 0.06, 0.10],
    ];

    fn palette_pixels(per: usize, jitter: f64, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut px = Vec::new();
        for color in PALETTE {
            for _ in 0..per {
                px.push(color.map(|v| v + rng.random_range(-jitter..=jitter)));
            }
        }
        px
    }

    #[test]
    fn five_tight_clusters_become_five_ordered_classes() {
        let px = palette_pixels(200, 0.02, 4);
        let model = build_color_model(&px, 5, 11).unwrap();
        for (i, color) in PALETTE.iter().enumerate() {
            assert_eq!(model.classify_color(color), i as u8 + 1);
        }
        let rho: Vec<f64> = model.class_centroids.iter().map(redness).collect();
        assert!(rho.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn default_k_still_maps_palette_in_order() {
        let px = palette_pixels(300, 0.03, 5);
        let model = build_color_model(&px, DEFAULT_K, 2).unwrap();
        assert_eq!(model.centroids.len(), DEFAULT_K);
        for (i, color) in PALETTE.iter().enumerate() {
            assert_eq!(model.classify_color(color), i as u8 + 1);
        }
    }

    #[test]
    fn identical_pixels_are_degenerate() {
        let px = vec![[0.4, 0.3, 0.2]; 100];
        assert_eq!(
            build_color_model(&px, 10, 0),
            Err(Error::DegenerateColorModel { found: 1 })
        );
        assert!(build_color_model(&px, 4, 0).is_err());
    }

    #[test]
    fn pure_green_and_red_are_the_extremes() {
        let mut px = palette_pixels(100, 0.02, 6);
        px.extend(vec![[0.0, 1.0, 0.0]; 50]);
        px.extend(vec![[1.0, 0.0, 0.0]; 50]);
        let model = build_color_model(&px, DEFAULT_K, 3).unwrap();
        assert_eq!(model.classify_color(&[0.0, 1.0, 0.0]), 1);
        assert_eq!(model.classify_color(&[1.0, 0.0, 0.0]), 5);
    }

    #[test]
    fn model_is_deterministic() {
        let px = palette_pixels(150, 0.03, 7);
        assert_eq!(
            build_color_model(&px, 10, 5).unwrap(),
            build_color_model(&px, 10, 5).unwrap()
        );
    }

    #[test]
    fn majority_and_tie_break() {
        let c = from_votes(0, [0, 0, 0, 4, 6]);
        assert_eq!(c.class, 5);
        assert_eq!(c.vote_fractions, [0.0, 0.0, 0.0, 0.4, 0.6]);
        let tie = from_votes(0, [0, 0, 5, 5, 0]);
        assert_eq!(tie.class, 4);
    }

    #[test]
    fn classify_deep_red_berry_as_class_five() {
        let px = palette_pixels(200, 0.02, 8);
        let model = build_color_model(&px, DEFAULT_K, 1).unwrap();
        let mut img = Image::filled(12, 12, [0.15, 0.32, 0.12]).unwrap();
        let mut pixels = Vec::new();
        for y in 2..10 {
            for x in 2..10 {
                img.set_pixel(x, y, [0.52, 0.07, 0.09]);
                pixels.push((x as u32, y as u32));
            }
        }
        let berry = BerryInstance::from_pixels(pixels, Some(&img));
        let c = classify_berry(&berry, 0, &img, &model).unwrap();
        assert_eq!(c.class, 5);
        assert_eq!(c.vote_fractions[4], 1.0);

        let empty = BerryInstance::from_pixels(vec![], None);
        assert_eq!(
            classify_berry(&empty, 0, &img, &model),
            Err(Error::EmptyInstance)
        );
    }

    #[test]
    fn classification_ignores_pixel_order() {
        let px = palette_pixels(200, 0.02, 9);
        let model = build_color_model(&px, DEFAULT_K, 1).unwrap();
        let mut img = Image::filled(10, 10, [0.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pixels = Vec::new();
        for y in 0..10u32 {
            for x in 0..10u32 {
                let color = PALETTE[rng.random_range(2..5)].map(|v| v as f32);
                img.set_pixel(x as usize, y as usize, color);
                pixels.push((x, y));
            }
        }
        let forward = BerryInstance {
            pixel_set: pixels.clone(),
            ..BerryInstance::from_pixels(vec![], None)
        };
        pixels.reverse();
        let backward = BerryInstance {
            pixel_set: pixels,
            ..forward.clone()
        };
        assert_eq!(
            classify_berry(&forward, 0, &img, &model).unwrap(),
            classify_berry(&backward, 0, &img, &model).unwrap()
        );
    }

    #[test]
    fn histogram_examples() {
        let m = meta("A5", "2022-08-02");
        let all_two: Vec<_> = (0..10).map(|_| classification(2)).collect();
        assert_eq!(
            class_histogram(&all_two, &m).fractions,
            [0.0, 1.0, 0.0, 0.0, 0.0]
        );

        let four: Vec<_> = [1, 2, 4, 5].into_iter().map(classification).collect();
        let h = class_histogram(&four, &m);
        assert_eq!(h.fractions, [0.25, 0.25, 0.0, 0.25, 0.25]);
        assert_eq!(h.berry_count, 4);

        let empty = class_histogram(&[], &m);
        assert_eq!(empty.fractions, [0.0; 5]);
        assert_eq!(empty.berry_count, 0);

        let mut reversed = four.clone();
        reversed.reverse();
        assert_eq!(class_histogram(&reversed, &m), h);
    }

    #[test]
    fn mixed_dates_are_rejected() {
        let a = meta("A5", "2022-08-02");
        let b = meta("A5", "2022-08-16");
        let c = classification(3);
        assert!(class_histogram_tagged(&[(&a, &c), (&b, &c)], &a).is_err());
        assert!(class_histogram_tagged(&[(&a, &c)], &a).is_ok());
    }

    fn square_mask(w: usize, h: usize, squares: &[(u32, u32, u32)]) -> SegmentationMask {
        let instances = squares
            .iter()
            .map(|&(x0, y0, s)| {
                let mut px = Vec::new();
                for y in y0..y0 + s {
                    for x in x0..x0 + s {
                        px.push((x, y));
                    }
                }
                BerryInstance::from_pixels(px, None)
            })
            .collect();
        SegmentationMask::from_instances(w, h, instances).unwrap()
    }

    #[test]
    fn exhaustive_and_deterministic_sampling() {
        let mut img = Image::filled(40, 40, [0.0; 3]).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                img.set_pixel(x, y, [x as f32 / 40.0, y as f32 / 40.0, 0.5]);
            }
        }
        let one = square_mask(40, 40, &[(0, 0, 10)]);
        let all = sample_berry_pixels(
            core::slice::from_ref(&one),
            core::slice::from_ref(&img),
            100,
            3,
        )
        .unwrap();
        assert_eq!(all.len(), 100);
        let expected: Vec<[f64; 3]> = one.instances()[0]
            .pixel_set
            .iter()
            .map(|&(x, y)| img.pixel(x as usize, y as usize).map(f64::from))
            .collect();
        assert_eq!(all, expected);

        let big = square_mask(40, 40, &[(0, 0, 31)]);
        let a = sample_berry_pixels(
            core::slice::from_ref(&big),
            core::slice::from_ref(&img),
            50,
            9,
        )
        .unwrap();
        let b = sample_berry_pixels(&[big], &[img.clone()], 50, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);

        // asking for more than exists returns everything
        let short = sample_berry_pixels(&[one], &[img], 1000, 1).unwrap();
        assert_eq!(short.len(), 100);
    }

    #[test]
    fn sampling_is_uniform_across_instances() {
        // Two 100-pixel instances; red channel tells them apart.
        let mut img = Image::filled(40, 20, [0.0; 3]).unwrap();
        for y in 0..10 {
            for x in 20..30 {
                img.set_pixel(x, y, [1.0, 0.0, 0.0]);
            }
        }
        let mask = square_mask(40, 20, &[(0, 0, 10), (20, 0, 10)]);
        let mut shares = Vec::new();
        for trial in 0..200 {
            let s = sample_berry_pixels(
                core::slice::from_ref(&mask),
                core::slice::from_ref(&img),
                100,
                trial,
            )
            .unwrap();
            let red = s.iter().filter(|p| p[0] > 0.5).count();
            shares.push(red as f64 / s.len() as f64);
        }
        let mean = shares.iter().sum::<f64>() / shares.len() as f64;
        assert!((mean - 0.5).abs() <= 0.05, "mean share {mean}");
    }
}
