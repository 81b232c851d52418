//! Ground-truthed synthetic bog scenes and season series.

mod card;
mod scene;
mod season;

pub use card::{render_card, SessionDistortion, CARD_PATCH};
pub use scene::{generate_scene, BerrySpec, SceneSpec, SyntheticScene, MAX_PLACEMENT_ATTEMPTS};
pub use season::{
    analytic_series, default_dates, generate_season, oracle_evaluate, realized_script,
    scene_spec_for_date, synthetic_scripts, OracleReport, SeasonScript,
};

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::albedo::{redness, CLASSES};
use crate::error::{Error, Result};

/// One calibrated RGB color per albedo class, green to red.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; CLASSES]", into = "[[f64; 3]; CLASSES]")]
pub struct Palette {
    colors: [[f64; 3]; CLASSES],
}

pub const DEFAULT_PALETTE: [[f64; 3]; CLASSES] = [
    [0.60, 0.80, 0.40],
    [0.80, 0.75, 0.35],
    [0.85, 0.45, 0.35],
    [0.75, 0.20, 0.20],
    [0.50, 0.06, 0.10],
];

impl Palette {
    /// Colors must lie in [0, 1] with strictly increasing redness.
    pub fn new(colors: [[f64; 3]; CLASSES]) -> Result<Self> {
        if colors
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidParameter(
                "palette channels must lie in [0, 1]".into(),
            ));
        }
        if colors.windows(2).any(|w| redness(&w[1]) <= redness(&w[0])) {
            return Err(Error::InvalidParameter(
                "palette redness must increase from class 1 to class 5".into(),
            ));
        }
        Ok(Self { colors })
    }

    pub fn colors(&self) -> &[[f64; 3]; CLASSES] {
        &self.colors
    }

    pub fn color(&self, class: u8) -> [f64; 3] {
        self.colors[class as usize - 1]
    }

    /// Class of the nearest palette color.
    pub fn class_of(&self, rgb: &[f64; 3]) -> u8 {
        crate::albedo::kmeans::nearest(&self.colors, rgb).0 as u8 + 1
    }
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: DEFAULT_PALETTE,
        }
    }
}

impl TryFrom<[[f64; 3]; CLASSES]> for Palette {
    type Error = Error;

    fn try_from(colors: [[f64; 3]; CLASSES]) -> Result<Self> {
        Self::new(colors)
    }
}

impl From<Palette> for [[f64; 3]; CLASSES] {
    fn from(p: Palette) -> Self {
        p.colors
    }
}

/// Check a class mixture is a probability vector.
pub fn validate_mixture(m: &[f64; CLASSES]) -> Result<()> {
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidMixture(format!(
            "negative or non-finite entry in {m:?}"
        )));
    }
    let total: f64 = m.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidMixture(format!(
            "entries sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Integer class counts for `n` items by largest remainder.
pub fn class_quotas(mixture: &[f64; CLASSES], n: usize) -> [usize; CLASSES] {
    let exact = mixture.map(|m| m * n as f64);
    let mut counts = exact.map(|e| libm::floor(e) as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: [usize; CLASSES] = core::array::from_fn(|i| i);
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Derive an independent stream seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
