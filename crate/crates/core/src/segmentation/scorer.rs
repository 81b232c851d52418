//! Logistic pixel scorer trained from pseudo-masks.
//!
//! Features are `(1, R, G, B, R^2, G^2, B^2)`. Training minimises
//! class-balanced cross-entropy over foreground and background pixels with
//! full-batch gradient descent; ignored pixels never enter the loss.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pseudo_mask::{PseudoLabel, PseudoMask};
use crate::error::{Error, Result};
use crate::image::{Image, Rgb};

pub const FEATURES: usize = 7;

#[inline]
pub fn features(rgb: Rgb) -> [f64; FEATURES] {
    let [r, g, b] = rgb.map(f64::from);
    [1.0, r, g, b, r * r, g * g, b * b]
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

/// Numerically stable `-ln(sigmoid(z))`.
#[inline]
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        libm::log1p(libm::exp(-z))
    } else {
        -z + libm::log1p(libm::exp(z))
    }
}

/// Gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Cap on training pixels drawn per class; larger pools are subsampled
    /// with the seed.
    pub max_pixels_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 2.0,
            seed: 7,
            max_pixels_per_class: 40_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelScorer {
    pub weights: [f64; FEATURES],
    pub trained: bool,
    pub training_loss_history: Vec<f64>,
}

impl Default for PixelScorer {
    fn default() -> Self {
        Self {
            weights: [0.0; FEATURES],
            trained: false,
            training_loss_history: Vec::new(),
        }
    }
}

impl PixelScorer {
    /// Foreground probability of a pixel.
    #[inline]
    pub fn score(&self, rgb: Rgb) -> f64 {
        let phi = features(rgb);
        sigmoid(dot(&self.weights, &phi))
    }

    /// Score every pixel of an image, row-major.
    pub fn score_map(&self, image: &Image) -> Vec<f64> {
        image.pixels().map(|p| self.score(p)).collect()
    }
}

#[inline]
fn dot(a: &[f64; FEATURES], b: &[f64; FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn draw(pool: Vec<Rgb>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; FEATURES]> {
    if pool.len() <= cap {
        return pool.into_iter().map(features).collect();
    }
    let mut idx = sample(rng, pool.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| features(pool[i])).collect()
}

/// Class-balanced loss and its gradient at `w`.
fn loss_and_grad(
    w: &[f64; FEATURES],
    fg: &[[f64; FEATURES]],
    bg: &[[f64; FEATURES]],
) -> (f64, [f64; FEATURES]) {
    let mut grad = [0.0; FEATURES];
    let mut loss = 0.0;
    for (set, target, weight) in [
        (fg, 1.0, 0.5 / fg.len() as f64),
        (bg, 0.0, 0.5 / bg.len() as f64),
    ] {
        for phi in set {
            let z = dot(w, phi);
            loss += weight
                * if target > 0.5 {
                    softplus_neg(z)
                } else {
                    softplus_neg(-z)
                };
            let err = weight * (sigmoid(z) - target);
            for (g, f) in grad.iter_mut().zip(phi) {
                *g += err * f;
            }
        }
    }
    (loss, grad)
}

/// Train a scorer on labelled crops.
///
/// `epochs == 0` returns the all-zero initial weights (score 0.5
/// everywhere), flagged untrained.
pub fn train_scorer(crops: &[(Image, PseudoMask)], config: &TrainConfig) -> Result<PixelScorer> {
    if crops.is_empty() {
        return Err(Error::InvalidParameter("no labelled crops".into()));
    }
    if !(config.learning_rate > 0.0) || config.max_pixels_per_class == 0 {
        return Err(Error::InvalidParameter(
            "learning rate and pixel cap must be positive".into(),
        ));
    }
    let mut fg_pool = Vec::new();
    let mut bg_pool = Vec::new();
    for (image, mask) in crops {
        if image.width() != mask.width() || image.height() != mask.height() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "image {}x{} vs mask {}x{}",
                image.width(),
                image.height(),
                mask.width(),
                mask.height()
            )));
        }
        for (rgb, &label) in image.pixels().zip(mask.labels()) {
            match label {
                PseudoLabel::Foreground => fg_pool.push(rgb),
                PseudoLabel::Background => bg_pool.push(rgb),
                PseudoLabel::Ignore => {}
            }
        }
    }
    if fg_pool.is_empty() {
        return Err(Error::NoForeground);
    }
    if bg_pool.is_empty() {
        return Err(Error::InvalidParameter(
            "no background pixels in corpus".into(),
        ));
    }

    let mut scorer = PixelScorer::default();
    if config.epochs == 0 {
        return Ok(scorer);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fg = draw(fg_pool, config.max_pixels_per_class, &mut rng);
    let bg = draw(bg_pool, config.max_pixels_per_class, &mut rng);

    let mut w = [0.0; FEATURES];
    for epoch in 0..config.epochs {
        let (loss, grad) = loss_and_grad(&w, &fg, &bg);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        scorer.training_loss_history.push(loss);
        for (wi, gi) in w.iter_mut().zip(grad) {
            *wi -= config.learning_rate * gi;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
        });
    }
    scorer.weights = w;
    scorer.trained = true;
    Ok(scorer)
}
