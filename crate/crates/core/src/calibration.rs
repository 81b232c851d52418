//! Per-session radiometric correction from the six neutral patches of a
//! ColorChecker card.
//!
//! Each channel is modelled as an affine response `v' = gain * v + offset`
//! fitted by ordinary least squares against a [`GreyReference`]. Corrected
//! images live on the reference scale.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Number of neutral patches on the card.
pub const GREY_PATCHES: usize = 6;
/// Minimum pixels per patch surviving the trim.
pub const MIN_PATCH_PIXELS: usize = 25;
/// Fraction dropped from each tail of every channel before averaging.
pub const TRIM_FRACTION: f64 = 0.10;

const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

fn luminance(rgb: [f64; 3]) -> f64 {
    LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    fn inside(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Target luminances of the neutral patches, lightest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GreyReference {
    values: [f64; GREY_PATCHES],
}

/// Nominal neutral-patch luminances used when no reference file is given.
pub const DEFAULT_GREY_REFERENCE: [f64; GREY_PATCHES] = [0.91, 0.59, 0.36, 0.19, 0.09, 0.03];

impl GreyReference {
    pub fn new(values: [f64; GREY_PATCHES]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidReference(alloc::format!(
                    "value {i} = {v} is outside [0, 1]"
                )));
            }
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidReference(
                "values must be strictly decreasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64; GREY_PATCHES] {
        &self.values
    }
}

impl Default for GreyReference {
    fn default() -> Self {
        Self {
            values: DEFAULT_GREY_REFERENCE,
        }
    }
}

impl TryFrom<Vec<f64>> for GreyReference {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let values: [f64; GREY_PATCHES] = v.try_into().map_err(|v: Vec<f64>| {
            Error::InvalidReference(alloc::format!(
                "expected {GREY_PATCHES} values, got {}",
                v.len()
            ))
        })?;
        Self::new(values)
    }
}

impl From<GreyReference> for Vec<f64> {
    fn from(r: GreyReference) -> Self {
        r.values.to_vec()
    }
}

/// Measured mean color of each neutral patch in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreyPatchMeasurement {
    pub session_id: String,
    means: [[f64; 3]; GREY_PATCHES],
    pixel_counts: [usize; GREY_PATCHES],
}

impl GreyPatchMeasurement {
    /// Validates pixel counts and the lightest-to-darkest ordering.
    pub fn new(
        session_id: impl Into<String>,
        means: [[f64; 3]; GREY_PATCHES],
        pixel_counts: [usize; GREY_PATCHES],
    ) -> Result<Self> {
        for (index, &count) in pixel_counts.iter().enumerate() {
            if count < MIN_PATCH_PIXELS {
                return Err(Error::PatchTooSmall {
                    index,
                    count,
                    min: MIN_PATCH_PIXELS,
                });
            }
        }
        for i in 1..GREY_PATCHES {
            if luminance(means[i]) >= luminance(means[i - 1]) {
                return Err(Error::PatchOrdering { index: i });
            }
        }
        Ok(Self {
            session_id: session_id.into(),
            means,
            pixel_counts,
        })
    }

    pub fn means(&self) -> &[[f64; 3]; GREY_PATCHES] {
        &self.means
    }

    pub fn pixel_counts(&self) -> &[usize; GREY_PATCHES] {
        &self.pixel_counts
    }
}

/// Per-channel affine correction for one imaging session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiometricCorrection {
    pub session_id: String,
    pub gain: [f64; 3],
    pub offset: [f64; 3],
    pub residual_rms: f64,
    /// Grey values the session was mapped onto; `None` when the correction
    /// was not fitted from a card.
    #[serde(default)]
    pub reference: Option<[f64; GREY_PATCHES]>,
}

impl RadiometricCorrection {
    pub fn identity(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            gain: [1.0; 3],
            offset: [0.0; 3],
            residual_rms: 0.0,
            reference: None,
        }
    }

    /// Corrected value of a single channel sample, before clamping.
    #[inline]
    pub fn map(&self, channel: usize, v: f64) -> f64 {
        self.gain[channel] * v + self.offset[channel]
    }
}

fn trimmed_mean(values: &mut [f32]) -> (f64, usize) {
    values.sort_by(f32::total_cmp);
    let drop = (values.len() as f64 * TRIM_FRACTION) as usize;
    let kept = &values[drop..values.len() - drop];
    let sum: f64 = kept.iter().map(|&v| f64::from(v)).sum();
    (sum / kept.len().max(1) as f64, kept.len())
}

/// Trimmed per-channel mean of each patch rectangle.
pub fn measure_grey_patches(
    card: &Image,
    rects: &[Rect; GREY_PATCHES],
    session_id: impl Into<String>,
) -> Result<GreyPatchMeasurement> {
    let mut means = [[0.0; 3]; GREY_PATCHES];
    let mut counts = [0usize; GREY_PATCHES];
    let mut buf: Vec<f32> = Vec::new();
    for (index, rect) in rects.iter().enumerate() {
        if !rect.inside(card.width(), card.height()) {
            return Err(Error::PatchOutOfBounds { index });
        }
        for c in 0..3 {
            buf.clear();
            for y in rect.y..rect.y + rect.h {
                for x in rect.x..rect.x + rect.w {
                    buf.push(card.pixel(x, y)[c]);
                }
            }
            let (mean, kept) = trimmed_mean(&mut buf);
            means[index][c] = mean;
            counts[index] = kept;
        }
    }
    GreyPatchMeasurement::new(session_id, means, counts)
}

/// Least-squares affine fit of each channel onto the reference.
pub fn fit_correction(
    measured: &GreyPatchMeasurement,
    reference: &GreyReference,
) -> Result<RadiometricCorrection> {
    let n = GREY_PATCHES as f64;
    let refs = reference.values();
    let ref_mean = refs.iter().sum::<f64>() / n;
    let mut gain = [0.0; 3];
    let mut offset = [0.0; 3];
    let mut sq_residuals = 0.0;

    for channel in 0..3 {
        let m: [f64; GREY_PATCHES] = core::array::from_fn(|i| measured.means[i][channel]);
        let m_mean = m.iter().sum::<f64>() / n;
        let sxx: f64 = m.iter().map(|v| (v - m_mean) * (v - m_mean)).sum();
        let sxy: f64 = m
            .iter()
            .zip(refs)
            .map(|(v, r)| (v - m_mean) * (r - ref_mean))
            .sum();
        if sxx <= 1e-14 {
            return Err(Error::SingularFit { channel });
        }
        let g = sxy / sxx;
        if g <= 0.0 {
            return Err(Error::InvertedResponse { channel, gain: g });
        }
        let o = ref_mean - g * m_mean;
        for (v, r) in m.iter().zip(refs) {
            let e = g * v + o - r;
            sq_residuals += e * e;
        }
        gain[channel] = g;
        offset[channel] = o;
    }

    Ok(RadiometricCorrection {
        session_id: measured.session_id.clone(),
        gain,
        offset,
        residual_rms: libm::sqrt(sq_residuals / (3.0 * n)),
        reference: Some(*refs),
    })
}

/// Apply a correction to an uncalibrated image, clamping into `[0, 1]`.
pub fn apply_correction(image: &Image, corr: &RadiometricCorrection) -> Result<Image> {
    if image.is_calibrated() {
        return Err(Error::AlreadyCalibrated);
    }
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % 3;
        *v = (corr.map(c, f64::from(*v)) as f32).clamp(0.0, 1.0);
    }
    Ok(out.with_calibrated(true))
}
