//! Capture metadata and point annotations.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cranberry cultivar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variety {
    MullicaQueen,
    Stevens,
    CrimsonQueen,
    Haines,
}

impl Variety {
    pub const ALL: [Variety; 4] = [
        Variety::MullicaQueen,
        Variety::Stevens,
        Variety::CrimsonQueen,
        Variety::Haines,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variety::MullicaQueen => "MullicaQueen",
            Variety::Stevens => "Stevens",
            Variety::CrimsonQueen => "CrimsonQueen",
            Variety::Haines => "Haines",
        }
    }
}

impl fmt::Display for Variety {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variety {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "mullicaqueen" => Ok(Variety::MullicaQueen),
            "stevens" => Ok(Variety::Stevens),
            "crimsonqueen" => Ok(Variety::CrimsonQueen),
            "haines" => Ok(Variety::Haines),
            _ => Err(Error::InvalidParameter(alloc::format!(
                "unknown variety {s:?}"
            ))),
        }
    }
}

/// Where and when a frame was captured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub bog_id: String,
    pub variety: Variety,
    pub date: NaiveDate,
    pub source_frame: String,
}

impl CaptureMeta {
    pub fn new(
        bog_id: impl Into<String>,
        variety: Variety,
        date: NaiveDate,
        source_frame: impl Into<String>,
    ) -> Result<Self> {
        let bog_id = bog_id.into();
        if bog_id.is_empty() {
            return Err(Error::InvalidParameter(
                "bog_id must not be empty".to_string(),
            ));
        }
        Ok(Self {
            bog_id,
            variety,
            date,
            source_frame: source_frame.into(),
        })
    }
}

/// Parse a `YYYY-MM-DD` date.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| {
        Error::InvalidParameter(alloc::format!("invalid date {s:?}, expected YYYY-MM-DD"))
    })
}

/// One click per berry on an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub image_id: String,
    pub points: Vec<(u32, u32)>,
}

impl PointAnnotation {
    /// Check every point is inside a `width x height` image and that no two
    /// points coincide.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(x, y) in &self.points {
            if x as usize >= width || y as usize >= height {
                return Err(Error::PointOutOfBounds {
                    image_id: self.image_id.clone(),
                    x,
                    y,
                    width,
                    height,
                });
            }
            if !seen.insert((x, y)) {
                return Err(Error::DuplicatePoint {
                    image_id: self.image_id.clone(),
                    x,
                    y,
                });
            }
        }
        Ok(())
    }

    /// Points falling inside the window `[x0, x0+w) x [y0, y0+h)`, shifted
    /// into window coordinates.
    pub fn restrict(&self, image_id: String, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        let points = self
            .points
            .iter()
            .filter(|&&(x, y)| {
                let (x, y) = (x as usize, y as usize);
                x >= x0 && x < x0 + w && y >= y0 && y < y0 + h
            })
            .map(|&(x, y)| (x - x0 as u32, y - y0 as u32))
            .collect();
        Self { image_id, points }
    }
}
