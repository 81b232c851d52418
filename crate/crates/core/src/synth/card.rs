use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{GreyReference, RadiometricCorrection, Rect, GREY_PATCHES};
use crate::error::Result;
use crate::image::Image;

/// Side of one rendered grey patch in pixels.
pub const CARD_PATCH: usize = 24;
const CARD_BORDER: usize = 8;
const CARD_BACKGROUND: f32 = 0.45;

/// Render the neutral row of a color card, lightest patch first, and
/// return the patch rectangles.
pub fn render_card(reference: &GreyReference) -> (Image, [Rect; GREY_PATCHES]) {
    let w = GREY_PATCHES * CARD_PATCH + (GREY_PATCHES + 1) * CARD_BORDER;
    let h = CARD_PATCH + 2 * CARD_BORDER;
    let mut card = Image::filled(w, h, [CARD_BACKGROUND; 3]).expect("card size is positive");
    let rects: [Rect; GREY_PATCHES] = core::array::from_fn(|i| {
        Rect::new(
            CARD_BORDER + i * (CARD_PATCH + CARD_BORDER),
            CARD_BORDER,
            CARD_PATCH,
            CARD_PATCH,
        )
    });
    for (rect, &v) in rects.iter().zip(reference.values()) {
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                card.set_pixel(x, y, [v as f32; 3]);
            }
        }
    }
    (card, rects)
}

/// Affine camera response of one capture session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionDistortion {
    pub gain: [f64; 3],
    pub offset: [f64; 3],
}

impl SessionDistortion {
    /// Gains in [0.8, 1.05] and offsets in [-0.02, 0.03], a range that
    /// keeps every default grey patch and palette color unclipped.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = core::array::from_fn(|_| rng.random_range(0.8..=1.05));
        let offset = core::array::from_fn(|_| rng.random_range(-0.02..=0.03));
        Self { gain, offset }
    }

    /// Raw camera values for a scene; the result is uncalibrated.
    pub fn apply(&self, image: &Image) -> Result<Image> {
        let data: Vec<f32> = image
            .data()
            .chunks_exact(3)
            .flat_map(|px| {
                (0..3).map(move |c| {
                    (self.gain[c] * f64::from(px[c]) + self.offset[c]).clamp(0.0, 1.0) as f32
                })
            })
            .collect();
        Ok(Image::new(image.width(), image.height(), data)?.with_calibrated(false))
    }

    /// The correction that undoes this distortion exactly.
    pub fn inverse(&self, session_id: impl Into<String>) -> RadiometricCorrection {
        RadiometricCorrection {
            session_id: session_id.into(),
            gain: self.gain.map(|g| 1.0 / g),
            offset: core::array::from_fn(|c| -self.offset[c] / self.gain[c]),
            residual_rms: 0.0,
            reference: None,
        }
    }
}
