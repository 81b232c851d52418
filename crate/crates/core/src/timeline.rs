//! Per-bog ripeness-ratio time series and overheating-risk dates.
//!
//! The ripeness ratio on a date is the red-berry fraction (classes 4 and 5
//! by default) divided by the red fraction on the final collection date.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::albedo::{ClassHistogram, CLASSES};
use crate::error::{Error, Result};
use crate::meta::Variety;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub threshold: f64,
    /// Albedo classes (1..=5) counted as red.
    pub red_classes: Vec<u8>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            threshold: 0.6,
            red_classes: alloc::vec![4, 5],
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.5) {
            return Err(Error::InvalidRiskConfig(format!(
                "threshold {} not in (0, 1.5]",
                self.threshold
            )));
        }
        if self.red_classes.is_empty()
            || self
                .red_classes
                .iter()
                .any(|&c| c == 0 || c as usize > CLASSES)
        {
            return Err(Error::InvalidRiskConfig(
                "red classes must be a non-empty subset of 1..=5".into(),
            ));
        }
        Ok(())
    }

    /// Sum of `fractions` over the red classes.
    pub fn red_mass(&self, fractions: &[f64; CLASSES]) -> f64 {
        let mut classes = self.red_classes.clone();
        classes.sort_unstable();
        classes.dedup();
        classes.iter().map(|&c| fractions[c as usize - 1]).sum()
    }
}

pub fn red_fraction(hist: &ClassHistogram, cfg: &RiskConfig) -> f64 {
    cfg.red_mass(&hist.fractions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipenessSeries {
    pub bog_id: String,
    pub variety: Option<Variety>,
    pub threshold: f64,
    pub dates: Vec<NaiveDate>,
    pub red_fractions: Vec<f64>,
    pub ratios: Vec<f64>,
    pub risk_dates: Vec<NaiveDate>,
}

/// Build a series from red fractions already ordered by date.
pub fn series_from_fractions(
    bog_id: impl Into<String>,
    variety: Option<Variety>,
    dates: Vec<NaiveDate>,
    red_fractions: Vec<f64>,
    cfg: &RiskConfig,
) -> Result<RipenessSeries> {
    cfg.validate()?;
    let bog_id = bog_id.into();
    if dates.len() != red_fractions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} dates vs {} fractions",
            dates.len(),
            red_fractions.len()
        )));
    }
    if dates.len() < 2 {
        return Err(Error::TooFewDates { got: dates.len() });
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnorderedDates { bog: bog_id });
    }
    let last = red_fractions[red_fractions.len() - 1];
    if !(last > 0.0) {
        return Err(Error::UndefinedRatio { bog: bog_id });
    }
    let ratios: Vec<f64> = red_fractions.iter().map(|&f| f / last).collect();
    let risk_dates = dates
        .iter()
        .zip(&ratios)
        .filter(|(_, &r)| r >= cfg.threshold)
        .map(|(&d, _)| d)
        .collect();
    Ok(RipenessSeries {
        bog_id,
        variety,
        threshold: cfg.threshold,
        dates,
        red_fractions,
        ratios,
        risk_dates,
    })
}

/// Ripeness series for one bog from its per-date histograms, which must be
/// given in strictly increasing date order.
pub fn ripeness_series(hists: &[ClassHistogram], cfg: &RiskConfig) -> Result<RipenessSeries> {
    let first = hists.first().ok_or(Error::TooFewDates { got: 0 })?;
    let mut variety = first.variety;
    for h in hists {
        if h.bog_id != first.bog_id {
            return Err(Error::MixedHistogram(format!(
                "bogs {} and {} in one series",
                first.bog_id, h.bog_id
            )));
        }
        match (variety, h.variety) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::MixedHistogram(format!(
                    "bog {} labelled both {a} and {b}",
                    first.bog_id
                )))
            }
            (None, Some(b)) => variety = Some(b),
            _ => {}
        }
    }
    series_from_fractions(
        first.bog_id.clone(),
        variety,
        hists.iter().map(|h| h.date).collect(),
        hists.iter().map(|h| red_fraction(h, cfg)).collect(),
        cfg,
    )
}

/// Earliest date whose ratio reaches the threshold.
pub fn first_risk_date(series: &RipenessSeries) -> Option<NaiveDate> {
    series.risk_dates.first().copied()
}

/// Index into `series.dates` of the first risk date.
pub fn first_risk_index(series: &RipenessSeries) -> Option<usize> {
    let d = first_risk_date(series)?;
    series.dates.iter().position(|&x| x == d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietyRank {
    pub variety: Variety,
    /// Mean first-risk date, rounded to the nearest day.
    pub mean_first_risk_date: NaiveDate,
    /// Unrounded mean, in days since 0001-01-01.
    pub mean_day: f64,
    pub series: usize,
}

/// Rank varieties from fastest to slowest ripening by the mean day of
/// their bogs' first risk crossings. Series without a variety or without a
/// crossing are skipped with a warning. Equal means fall back to
/// alphabetical variety name.
pub fn variety_comparison(all_series: &[RipenessSeries]) -> Vec<VarietyRank> {
    let mut days: BTreeMap<Variety, Vec<i32>> = BTreeMap::new();
    for s in all_series {
        let Some(variety) = s.variety else {
            log::warn!("bog {} has no variety; skipped in comparison", s.bog_id);
            continue;
        };
        match first_risk_date(s) {
            Some(d) => days.entry(variety).or_default().push(d.num_days_from_ce()),
            None => log::warn!(
                "bog {} ({variety}) never reaches ratio {}; skipped in comparison",
                s.bog_id,
                s.threshold
            ),
        }
    }
    let mut ranks: Vec<VarietyRank> = days
        .into_iter()
        .map(|(variety, d)| {
            let mean_day = d.iter().map(|&x| f64::from(x)).sum::<f64>() / d.len() as f64;
            let rounded = libm::round(mean_day) as i32;
            VarietyRank {
                variety,
                mean_first_risk_date: NaiveDate::from_num_days_from_ce_opt(rounded)
                    .unwrap_or(NaiveDate::MIN),
                mean_day,
                series: d.len(),
            }
        })
        .collect();
    ranks.sort_by(|a, b| {
        a.mean_day
            .total_cmp(&b.mean_day)
            .then_with(|| a.variety.name().cmp(b.variety.name()))
    });
    ranks
}
