use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{derive_seed, generate_scene, validate_mixture, Palette, SceneSpec, SyntheticScene};
use crate::albedo::CLASSES;
use crate::error::{Error, Result};
use crate::meta::{CaptureMeta, Variety};
use crate::timeline::{first_risk_index, series_from_fractions, RipenessSeries, RiskConfig};

const KERNEL_SIGMA: f64 = 0.7;
const RIPENING_WIDTH_DAYS: f64 = 5.0;

/// Scripted class mixtures for one bog over a season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonScript {
    pub bog_id: String,
    pub variety: Variety,
    pub dates: Vec<NaiveDate>,
    pub mixtures: Vec<[f64; CLASSES]>,
}

impl SeasonScript {
    pub fn validate(&self) -> Result<()> {
        if self.bog_id.is_empty() {
            return Err(Error::InvalidParameter("bog_id must not be empty".into()));
        }
        if self.dates.is_empty() || self.dates.len() != self.mixtures.len() {
            return Err(Error::InvalidMixture(format!(
                "{} dates vs {} mixtures",
                self.dates.len(),
                self.mixtures.len()
            )));
        }
        if self.dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::UnorderedDates {
                bog: self.bog_id.clone(),
            });
        }
        self.mixtures.iter().try_for_each(validate_mixture)
    }

    /// Mixtures following a logistic ripening curve whose timing depends
    /// on the variety. Mass sits on a Gaussian bump over the class index
    /// that travels from class 1 toward class 5.
    pub fn progression(
        bog_id: impl Into<String>,
        variety: Variety,
        dates: Vec<NaiveDate>,
    ) -> Result<Self> {
        let start = *dates
            .first()
            .ok_or_else(|| Error::InvalidMixture("season has no dates".into()))?;
        let midpoint = match variety {
            Variety::Haines => 20.0,
            Variety::CrimsonQueen => 24.0,
            Variety::MullicaQueen => 29.0,
            Variety::Stevens => 33.0,
        };
        let mixtures = dates
            .iter()
            .map(|d| {
                let t = (*d - start).num_days() as f64;
                let s = 1.0 / (1.0 + libm::exp(-(t - midpoint) / RIPENING_WIDTH_DAYS));
                class_bump(1.0 + 4.0 * s)
            })
            .collect();
        let script = Self {
            bog_id: bog_id.into(),
            variety,
            dates,
            mixtures,
        };
        script.validate()?;
        Ok(script)
    }
}

fn class_bump(center: f64) -> [f64; CLASSES] {
    let raw: [f64; CLASSES] = core::array::from_fn(|i| {
        let z = (i as f64 + 1.0 - center) / KERNEL_SIGMA;
        libm::exp(-0.5 * z * z)
    });
    let total: f64 = raw.iter().sum();
    raw.map(|v| v / total)
}

/// The six collection dates of the 2022 season, then weekly.
pub fn default_dates(n: usize) -> Vec<NaiveDate> {
    const SEASON: [(u32, u32); 6] = [(8, 2), (8, 16), (8, 25), (8, 31), (9, 9), (9, 14)];
    let mut dates: Vec<NaiveDate> = SEASON
        .iter()
        .take(n)
        .map(|&(m, d)| NaiveDate::from_ymd_opt(2022, m, d).expect("valid calendar date"))
        .collect();
    while dates.len() < n {
        let last = *dates.last().expect("at least one date");
        dates.push(last + chrono::Days::new(7));
    }
    dates
}

/// Scripts for bogs `B1..Bn`, cycling through the varieties from fastest
/// to slowest ripening.
pub fn synthetic_scripts(n_bogs: usize, dates: &[NaiveDate]) -> Result<Vec<SeasonScript>> {
    const CYCLE: [Variety; 4] = [
        Variety::Haines,
        Variety::CrimsonQueen,
        Variety::MullicaQueen,
        Variety::Stevens,
    ];
    (0..n_bogs)
        .map(|i| SeasonScript::progression(format!("B{}", i + 1), CYCLE[i % 4], dates.to_vec()))
        .collect()
}

/// Scene spec for date `index` of a season.
pub fn scene_spec_for_date(
    script: &SeasonScript,
    template: &SceneSpec,
    seed: u64,
    index: usize,
) -> SceneSpec {
    SceneSpec {
        class_mixture: script.mixtures[index],
        seed: derive_seed(seed, index as u64),
        ..template.clone()
    }
}

/// One scene per scripted date.
pub fn generate_season(
    script: &SeasonScript,
    template: &SceneSpec,
    palette: &Palette,
    seed: u64,
) -> Result<Vec<(SyntheticScene, CaptureMeta)>> {
    script.validate()?;
    script
        .dates
        .iter()
        .enumerate()
        .map(|(i, &date)| {
            let spec = scene_spec_for_date(script, template, seed, i);
            let mut scene = generate_scene(&spec, palette)?;
            let frame = format!("{}_{}", script.bog_id, date);
            scene.points.image_id = frame.clone();
            let meta = CaptureMeta::new(script.bog_id.clone(), script.variety, date, frame)?;
            Ok((scene, meta))
        })
        .collect()
}

/// Script whose mixtures are the class shares actually painted, given
/// per-date class counts.
pub fn realized_script(script: &SeasonScript, counts: &[[usize; CLASSES]]) -> Result<SeasonScript> {
    if counts.len() != script.dates.len() {
        return Err(Error::DateMismatch(format!(
            "{} count rows for {} dates",
            counts.len(),
            script.dates.len()
        )));
    }
    let mixtures = counts
        .iter()
        .zip(&script.dates)
        .map(|(c, d)| {
            let total: usize = c.iter().sum();
            if total == 0 {
                return Err(Error::InvalidMixture(format!("no berries on {d}")));
            }
            Ok(c.map(|v| v as f64 / total as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeasonScript {
        mixtures,
        ..script.clone()
    })
}

/// Ripeness series implied by the scripted mixtures.
pub fn analytic_series(script: &SeasonScript, cfg: &RiskConfig) -> Result<RipenessSeries> {
    script.validate()?;
    series_from_fractions(
        script.bog_id.clone(),
        Some(script.variety),
        script.dates.clone(),
        script.mixtures.iter().map(|m| cfg.red_mass(m)).collect(),
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub bog_id: String,
    pub max_ratio_error: f64,
    pub per_date_errors: Vec<(NaiveDate, f64)>,
    pub analytic_ratios: Vec<f64>,
    pub pipeline_ratios: Vec<f64>,
    pub analytic_first_risk: Option<usize>,
    pub pipeline_first_risk: Option<usize>,
}

impl OracleReport {
    /// Distance in date indices between the two first-risk dates, if both
    /// exist.
    pub fn first_risk_offset(&self) -> Option<usize> {
        Some(
            self.analytic_first_risk?
                .abs_diff(self.pipeline_first_risk?),
        )
    }
}

/// Compare a pipeline series to the analytic ratios of `script`, using the
/// series' own threshold and `cfg`'s red classes.
pub fn oracle_evaluate(
    series: &RipenessSeries,
    script: &SeasonScript,
    cfg: &RiskConfig,
) -> Result<OracleReport> {
    if series.bog_id != script.bog_id {
        return Err(Error::DateMismatch(format!(
            "series for bog {} vs script for bog {}",
            series.bog_id, script.bog_id
        )));
    }
    if series.dates != script.dates {
        return Err(Error::DateMismatch(format!(
            "bog {}: pipeline dates {:?} vs scripted {:?}",
            series.bog_id, series.dates, script.dates
        )));
    }
    let cfg = RiskConfig {
        threshold: series.threshold,
        ..cfg.clone()
    };
    let analytic = analytic_series(script, &cfg)?;
    let per_date_errors: Vec<(NaiveDate, f64)> = series
        .dates
        .iter()
        .zip(series.ratios.iter().zip(&analytic.ratios))
        .map(|(&d, (p, a))| (d, (p - a).abs()))
        .collect();
    let max_ratio_error = per_date_errors
        .iter()
        .map(|&(_, e)| e)
        .fold(
            0.0,
            |m: f64, e| if e.is_nan() { f64::NAN } else { m.max(e) },
        );
    Ok(OracleReport {
        bog_id: series.bog_id.clone(),
        max_ratio_error,
        per_date_errors,
        analytic_first_risk: first_risk_index(&analytic),
        pipeline_first_risk: first_risk_index(series),
        analytic_ratios: analytic.ratios,
        pipeline_ratios: series.ratios.clone(),
    })
}
