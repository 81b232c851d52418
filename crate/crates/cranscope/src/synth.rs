//! Write synthetic seasons in the dataset layout, with truth masks and the
//! script needed to score a run against them.

use std::path::{Path, PathBuf};

use cranscope_core::albedo::CLASSES;
use cranscope_core::calibration::GreyReference;
use cranscope_core::image::{DEFAULT_CROP_H, DEFAULT_CROP_W};
use cranscope_core::meta::PointAnnotation;
use cranscope_core::synth::{
    default_dates, derive_seed, generate_scene, realized_script, render_card, synthetic_scripts,
    validate_mixture, Palette, SceneSpec, SeasonScript, SessionDistortion,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    crop_id, BogInfo, ANNOTATIONS_FILE, BOG_FILE, CARD_FILE, FRAMES_DIR, PATCHES_FILE, TRUTH_DIR,
};
use crate::error::{AppError, AppResult, DataExt};
use crate::io::{write_json, write_mask, write_rgb};
use crate::pipeline::{thread_pool, write_atomically};

pub const SYNTH_JSON: &str = "synth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub bogs: usize,
    pub dates: usize,
    /// Frames per session; each frame is a single crop.
    pub frames: usize,
    pub seed: u64,
    /// Berries per frame; drawn from 80..=160 when unset.
    pub berries: Option<usize>,
    pub jitter: f64,
    pub occlusion_rate: f64,
    /// Same mixture on every date instead of the ripening script.
    pub mixture: Option<[f64; CLASSES]>,
    /// Apply a random per-session camera response.
    pub distort: bool,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        let scene = SceneSpec::default();
        Self {
            bogs: 2,
            dates: 6,
            frames: 1,
            seed: 0,
            berries: None,
            jitter: scene.jitter,
            occlusion_rate: scene.occlusion_rate,
            mixture: None,
            distort: true,
            width: DEFAULT_CROP_W,
            height: DEFAULT_CROP_H,
        }
    }
}

impl SynthOptions {
    pub fn validate(&self) -> AppResult<()> {
        if let Some(m) = &self.mixture {
            validate_mixture(m).map_err(|e| AppError::Usage(e.to_string()))?;
        }
        if self.bogs == 0 || self.dates == 0 || self.frames == 0 {
            return Err(AppError::Usage(
                "bogs, dates and frames must be positive".into(),
            ));
        }
        self.template(0)
            .validate()
            .map_err(|e| AppError::Usage(e.to_string()))
    }

    fn template(&self, seed: u64) -> SceneSpec {
        let base = SceneSpec::with_seed(seed);
        SceneSpec {
            width: self.width,
            height: self.height,
            n_berries: self.berries.unwrap_or(base.n_berries),
            jitter: self.jitter,
            occlusion_rate: self.occlusion_rate,
            ..base
        }
    }

    pub fn scripts(&self) -> AppResult<Vec<SeasonScript>> {
        let mut scripts = synthetic_scripts(self.bogs, &default_dates(self.dates))
            .map_err(|e| AppError::Usage(e.to_string()))?;
        if let Some(m) = self.mixture {
            for s in &mut scripts {
                s.mixtures = vec![m; s.dates.len()];
            }
        }
        Ok(scripts)
    }
}

/// Contents of `synth.json`: what was asked for and what was painted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub options: SynthOptions,
    pub scripts: Vec<SeasonScript>,
    pub realized: Vec<SeasonScript>,
    pub distortions: Vec<Vec<SessionDistortion>>,
}

const IDENTITY: SessionDistortion = SessionDistortion {
    gain: [1.0; 3],
    offset: [0.0; 3],
};

/// Generate a season per bog and write it under `out`.
pub fn cmd_synth(
    out: &Path,
    opts: &SynthOptions,
    palette: &Palette,
    reference: &GreyReference,
    jobs: usize,
    force: bool,
) -> AppResult<SynthRecord> {
    opts.validate()?;
    let scripts = opts.scripts()?;
    let pool = thread_pool(jobs)?;
    let (card, patches) = render_card(reference);

    write_atomically(out, force, |root| {
        let sessions: Vec<(usize, usize)> = (0..scripts.len())
            .flat_map(|b| (0..opts.dates).map(move |d| (b, d)))
            .collect();
        for s in &scripts {
            write_json(
                &root.join(&s.bog_id).join(BOG_FILE),
                &BogInfo { variety: s.variety },
            )?;
        }
        let results: Vec<([usize; CLASSES], SessionDistortion)> = pool.install(|| {
            sessions
                .par_iter()
                .map(|&(b, d)| {
                    let script = &scripts[b];
                    let dir: PathBuf = root.join(&script.bog_id).join(script.dates[d].to_string());
                    let session = (b * opts.dates + d) as u64;
                    let distortion = if opts.distort {
                        SessionDistortion::random(derive_seed(opts.seed ^ 0xCA1D, session))
                    } else {
                        IDENTITY
                    };
                    let mut counts = [0; CLASSES];
                    let mut annotations = Vec::with_capacity(opts.frames);
                    for f in 0..opts.frames {
                        let scene_seed =
                            derive_seed(opts.seed, session * opts.frames as u64 + f as u64);
                        let spec = SceneSpec {
                            class_mixture: script.mixtures[d],
                            ..opts.template(scene_seed)
                        };
                        let scene = generate_scene(&spec, palette)
                            .context(|| format!("{} {}", script.bog_id, script.dates[d]))?;
                        let stem = format!("f{f:03}");
                        let raw = distortion.apply(&scene.image).context(|| stem.clone())?;
                        write_rgb(&dir.join(FRAMES_DIR).join(format!("{stem}.png")), &raw)?;
                        write_mask(
                            &dir.join(TRUTH_DIR)
                                .join(format!("{}.png", crop_id(&stem, 0, 0))),
                            &scene.truth_mask,
                        )?;
                        annotations.push(PointAnnotation {
                            image_id: stem,
                            points: scene.points.points.clone(),
                        });
                        for (c, n) in counts.iter_mut().zip(scene.class_counts()) {
                            *c += n;
                        }
                    }
                    write_json(&dir.join(ANNOTATIONS_FILE), &annotations)?;
                    let raw_card = distortion.apply(&card).context(|| "card".into())?;
                    write_rgb(&dir.join(CARD_FILE), &raw_card)?;
                    write_json(&dir.join(PATCHES_FILE), &patches)?;
                    Ok((counts, distortion))
                })
                .collect::<AppResult<_>>()
        })?;

        let mut realized = Vec::with_capacity(scripts.len());
        let mut distortions = Vec::with_capacity(scripts.len());
        for (b, script) in scripts.iter().enumerate() {
            let rows = &results[b * opts.dates..(b + 1) * opts.dates];
            let counts: Vec<[usize; CLASSES]> = rows.iter().map(|r| r.0).collect();
            realized.push(realized_script(script, &counts).context(|| script.bog_id.clone())?);
            distortions.push(rows.iter().map(|r| r.1).collect());
        }
        let record = SynthRecord {
            options: opts.clone(),
            scripts: scripts.clone(),
            realized,
            distortions,
        };
        write_json(&root.join(SYNTH_JSON), &record)?;
        Ok(record)
    })
}
