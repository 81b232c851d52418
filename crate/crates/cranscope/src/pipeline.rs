//! Stages of a run: calibrate, tile, train or load the scorer, segment,
//! fit or load the color model, classify, aggregate, report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use cranscope_core::albedo::{
    build_color_model, classify_mask, sample_berry_pixels, BerryClassification, ClassHistogram,
    ColorClassModel, CLASSES,
};
use cranscope_core::calibration::{
    apply_correction, fit_correction, measure_grey_patches, GreyReference, RadiometricCorrection,
};
use cranscope_core::image::{tile_frame, CropGrid, Image};
use cranscope_core::meta::{CaptureMeta, PointAnnotation, Variety};
use cranscope_core::segmentation::{
    build_pseudo_mask, segment, train_scorer, PixelScorer, SegmentationMask,
};
use cranscope_core::synth::Palette;
use cranscope_core::timeline::{ripeness_series, variety_comparison, RipenessSeries};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::dataset::{
    crop_id, load_dataset, CalibrationSource, DatasetIndex, SessionEntry, MASKS_DIR,
};
use crate::error::{AppError, AppResult, DataExt, StageExt};
use crate::io::{
    load_grey_reference, load_palette, read_json, read_mask, read_rgb, sha256_file, write_file,
    write_json, write_mask,
};
use crate::report::{
    histogram_svg, svg_file_name, write_histograms_csv, write_ripeness_csv, write_risk_json,
    write_varieties_json, Manifest, HISTOGRAMS_CSV, MANIFEST_JSON, RIPENESS_CSV, RISK_JSON,
    VARIETIES_JSON,
};

pub const INDEX_JSON: &str = "index.json";
pub const SCORER_JSON: &str = "scorer.json";
pub const COLOR_MODEL_JSON: &str = "color_model.json";
pub const CALIBRATION_DIR: &str = "calibration";

/// Calibrated crops of a dataset in index order.
#[derive(Debug, Clone, Default)]
pub struct Crops {
    pub images: Vec<Image>,
    pub metas: Vec<CaptureMeta>,
    /// `<bog>/<date>/<crop id>`, the crop's path under a mask directory.
    pub keys: Vec<String>,
    pub points: Vec<Option<PointAnnotation>>,
}

impl Crops {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

pub fn thread_pool(jobs: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start {jobs} workers: {e}")))
}

fn timed<T>(stage: &'static str, f: impl FnOnce() -> AppResult<T>) -> AppResult<T> {
    let start = Instant::now();
    let out = f().stage(stage);
    log::info!("stage {stage}: {:.3}s", start.elapsed().as_secs_f64());
    out
}

/// Correction for one session from its card, a stored file, or identity
/// when neither is present.
pub fn session_correction(
    root: &Path,
    session: &SessionEntry,
    reference: &GreyReference,
) -> AppResult<RadiometricCorrection> {
    let id = format!("{}/{}", session.bog_id, session.date);
    match &session.calibration {
        CalibrationSource::Card { card, patches } => {
            let path = root.join(card);
            let image = read_rgb(&path)?;
            let m =
                measure_grey_patches(&image, patches, id).context(|| path.display().to_string())?;
            fit_correction(&m, reference).context(|| path.display().to_string())
        }
        CalibrationSource::Stored { path } => read_json(&root.join(path)),
        CalibrationSource::Missing => {
            log::warn!("session {id} has no card or calibration; frames used as-is");
            Ok(RadiometricCorrection::identity(id))
        }
    }
}

/// Load, correct and tile every frame.
pub fn prepare_crops(
    root: &Path,
    index: &DatasetIndex,
    corrections: &[RadiometricCorrection],
    cfg: &PipelineConfig,
    pool: &rayon::ThreadPool,
) -> AppResult<Crops> {
    let jobs: Vec<(usize, usize)> = index
        .sessions
        .iter()
        .enumerate()
        .flat_map(|(s, sess)| (0..sess.frames.len()).map(move |f| (s, f)))
        .collect();
    type Piece = (Image, CaptureMeta, String, Option<PointAnnotation>);
    let pieces: Vec<Vec<Piece>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, f)| {
                let session = &index.sessions[s];
                let frame = &session.frames[f];
                let path = root.join(&frame.path);
                let raw = read_rgb(&path)?;
                let image = match session.calibration {
                    CalibrationSource::Missing => raw.with_calibrated(true),
                    _ => apply_correction(&raw, &corrections[s])
                        .context(|| path.display().to_string())?,
                };
                let grid = CropGrid::fit(
                    image.width(),
                    image.height(),
                    cfg.crop_width,
                    cfg.crop_height,
                )
                .context(|| path.display().to_string())?;
                let tiles = tile_frame(&image, &grid).context(|| path.display().to_string())?;
                let meta = CaptureMeta::new(
                    session.bog_id.clone(),
                    session.variety,
                    session.date,
                    frame.path.clone(),
                )
                .context(|| path.display().to_string())?;
                Ok(tiles
                    .into_iter()
                    .map(|t| {
                        let id = crop_id(&frame.stem, t.row, t.col);
                        let points = frame.annotation.as_ref().map(|a| {
                            a.restrict(
                                id.clone(),
                                t.origin.0,
                                t.origin.1,
                                cfg.crop_width,
                                cfg.crop_height,
                            )
                        });
                        let key = format!("{}/{}/{}", session.bog_id, session.date, id);
                        (t.image, meta.clone(), key, points)
                    })
                    .collect())
            })
            .collect::<AppResult<_>>()
    })?;
    let mut crops = Crops::default();
    for (image, meta, key, points) in pieces.into_iter().flatten() {
        crops.images.push(image);
        crops.metas.push(meta);
        crops.keys.push(key);
        crops.points.push(points);
    }
    Ok(crops)
}

/// Fit the pixel scorer on every annotated crop.
pub fn train_stage(crops: &Crops, cfg: &PipelineConfig) -> AppResult<PixelScorer> {
    let p = &cfg.segmentation;
    let labelled: Vec<_> = crops
        .images
        .iter()
        .zip(&crops.points)
        .filter_map(|(img, pts)| pts.as_ref().map(|pts| (img, pts)))
        .map(|(img, pts)| {
            let mask = build_pseudo_mask(pts, (img.width(), img.height()), p.r_fg, p.r_ig)
                .context(|| pts.image_id.clone())?;
            Ok((img.clone(), mask))
        })
        .collect::<AppResult<_>>()?;
    if labelled.is_empty() {
        return Err(AppError::Usage(
            "no annotated crops to train on; add annotations.json or pass --scorer".into(),
        ));
    }
    log::info!("training scorer on {} annotated crops", labelled.len());
    train_scorer(&labelled, &cfg.training).context(|| "scorer training".into())
}

pub fn load_scorer(path: &Path) -> AppResult<PixelScorer> {
    let scorer: PixelScorer = read_json(path)?;
    if !scorer.trained {
        return Err(AppError::data(
            path.display().to_string(),
            cranscope_core::Error::UntrainedScorer,
        ));
    }
    Ok(scorer)
}

pub fn segment_stage(
    crops: &Crops,
    scorer: &PixelScorer,
    cfg: &PipelineConfig,
    pool: &rayon::ThreadPool,
) -> AppResult<Vec<SegmentationMask>> {
    pool.install(|| {
        crops
            .images
            .par_iter()
            .zip(&crops.keys)
            .map(|(img, key)| segment(img, scorer, &cfg.segmentation).context(|| key.clone()))
            .collect()
    })
}

pub fn color_stage(
    crops: &Crops,
    masks: &[SegmentationMask],
    cfg: &PipelineConfig,
) -> AppResult<ColorClassModel> {
    if let Some(path) = &cfg.color_model {
        let model: ColorClassModel = read_json(path)?;
        model.validate().context(|| path.display().to_string())?;
        return Ok(model);
    }
    let pixels = sample_berry_pixels(masks, &crops.images, cfg.color_sample, cfg.color_seed)
        .context(|| "berry pixel sampling".into())?;
    build_color_model(&pixels, cfg.k, cfg.color_seed).context(|| "color model".into())
}

pub fn classify_stage(
    crops: &Crops,
    masks: &[SegmentationMask],
    model: &ColorClassModel,
    pool: &rayon::ThreadPool,
) -> AppResult<Vec<Vec<BerryClassification>>> {
    pool.install(|| {
        masks
            .par_iter()
            .zip(crops.images.par_iter())
            .zip(crops.keys.par_iter())
            .map(|((mask, img), key)| classify_mask(mask, img, model).context(|| key.clone()))
            .collect()
    })
}

/// One histogram per (bog, date), sorted by bog then date. Sessions whose
/// crops hold no berries get an all-zero histogram.
pub fn histogram_stage(
    crops: &Crops,
    classifications: &[Vec<BerryClassification>],
) -> Vec<ClassHistogram> {
    let mut groups: BTreeMap<(String, NaiveDate), (Variety, [usize; CLASSES])> = BTreeMap::new();
    for (meta, cls) in crops.metas.iter().zip(classifications) {
        let entry = groups
            .entry((meta.bog_id.clone(), meta.date))
            .or_insert((meta.variety, [0; CLASSES]));
        for c in cls {
            entry.1[c.class as usize - 1] += 1;
        }
    }
    groups
        .into_iter()
        .map(|((bog, date), (variety, counts))| {
            ClassHistogram::from_counts(bog, Some(variety), date, counts)
        })
        .collect()
}

/// Ripeness series per bog from histograms sorted by bog then date.
pub fn timeline_stage(
    hists: &[ClassHistogram],
    cfg: &PipelineConfig,
) -> AppResult<Vec<RipenessSeries>> {
    let mut by_bog: BTreeMap<&str, Vec<ClassHistogram>> = BTreeMap::new();
    for h in hists {
        by_bog.entry(&h.bog_id).or_default().push(h.clone());
    }
    by_bog
        .into_iter()
        .map(|(bog, hs)| ripeness_series(&hs, &cfg.risk).context(|| format!("bog {bog}")))
        .collect()
}

/// Write every report file into `dir`.
pub fn write_reports(
    dir: &Path,
    hists: &[ClassHistogram],
    series: &[RipenessSeries],
    palette: &Palette,
) -> AppResult<()> {
    write_ripeness_csv(&dir.join(RIPENESS_CSV), series)?;
    write_histograms_csv(&dir.join(HISTOGRAMS_CSV), hists)?;
    write_risk_json(&dir.join(RISK_JSON), series)?;
    write_varieties_json(&dir.join(VARIETIES_JSON), &variety_comparison(series))?;
    let mut by_bog: BTreeMap<&str, Vec<ClassHistogram>> = BTreeMap::new();
    for h in hists {
        by_bog.entry(&h.bog_id).or_default().push(h.clone());
    }
    for (bog, hs) in by_bog {
        write_file(
            &dir.join(svg_file_name(bog)),
            histogram_svg(bog, &hs, palette).as_bytes(),
        )?;
    }
    Ok(())
}

pub fn write_masks(dir: &Path, crops: &Crops, masks: &[SegmentationMask]) -> AppResult<()> {
    for (key, mask) in crops.keys.iter().zip(masks) {
        write_mask(&dir.join(format!("{key}.png")), mask)?;
    }
    Ok(())
}

/// Masks for every crop from `dir/<key>.png` or `dir/masks/<key>.png`.
pub fn load_masks(dir: &Path, crops: &Crops) -> AppResult<Vec<SegmentationMask>> {
    crops
        .keys
        .iter()
        .zip(&crops.images)
        .map(|(key, img)| {
            let direct = dir.join(format!("{key}.png"));
            let nested = dir.join(MASKS_DIR).join(format!("{key}.png"));
            let path = if direct.is_file() { direct } else { nested };
            let mask = read_mask(&path, Some(img))?;
            if mask.width() != img.width() || mask.height() != img.height() {
                return Err(AppError::file(&path, "mask and crop sizes differ"));
            }
            Ok(mask)
        })
        .collect()
}

/// Hash of every file under the dataset root plus the model inputs.
pub fn input_hash(root: &Path, cfg: &PipelineConfig) -> AppResult<(String, usize)> {
    let mut hasher = Sha256::new();
    let mut files = 0;
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| AppError::file(root, e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        hasher.update(rel.to_string_lossy().replace('\\', "/").as_bytes());
        hasher.update([0]);
        hasher.update(sha256_file(entry.path())?.as_bytes());
        files += 1;
    }
    let extras = [
        &cfg.scorer,
        &cfg.color_model,
        &cfg.grey_reference,
        &cfg.palette,
    ];
    for path in extras.into_iter().flatten() {
        hasher.update(sha256_file(path)?.as_bytes());
        files += 1;
    }
    Ok((format!("{:x}", hasher.finalize()), files))
}

/// Run `f` against a scratch directory next to `out`, then move it into
/// place. The scratch directory is removed if `f` fails.
pub fn write_atomically<T>(
    out: &Path,
    force: bool,
    f: impl FnOnce(&Path) -> AppResult<T>,
) -> AppResult<T> {
    if out.is_file() {
        return Err(AppError::Usage(format!("{} is a file", out.display())));
    }
    let occupied = out.is_dir()
        && fs::read_dir(out)
            .map_err(|e| AppError::file(out, e))?
            .next()
            .is_some();
    if occupied && !force {
        return Err(AppError::Usage(format!(
            "{} is not empty; pass --force to replace it",
            out.display()
        )));
    }
    let name = out
        .file_name()
        .ok_or_else(|| AppError::Usage(format!("bad output path {}", out.display())))?;
    let mut partial_name = name.to_os_string();
    partial_name.push(".partial");
    let partial: PathBuf = out.with_file_name(partial_name);
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| AppError::file(&partial, e))?;
    }
    fs::create_dir_all(&partial).map_err(|e| AppError::file(&partial, e))?;
    match f(&partial) {
        Ok(v) => {
            if out.exists() {
                fs::remove_dir_all(out).map_err(|e| AppError::file(out, e))?;
            }
            fs::rename(&partial, out).map_err(|e| AppError::file(out, e))?;
            Ok(v)
        }
        Err(e) => {
            if let Err(rm) = fs::remove_dir_all(&partial) {
                log::warn!("could not remove {}: {rm}", partial.display());
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output: PathBuf,
    pub manifest: Manifest,
    pub histograms: Vec<ClassHistogram>,
    pub series: Vec<RipenessSeries>,
}

fn manifest(cfg: &PipelineConfig, root: &Path, crops: usize, bogs: usize) -> AppResult<Manifest> {
    let (input_hash, input_files) = input_hash(root, cfg)?;
    Ok(Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        input_hash,
        input_files,
        crops,
        bogs,
        count_unit: "crop".into(),
    })
}

/// Shared front half of `run`, `train`, `segment` and `classify`.
pub struct Loaded {
    pub root: PathBuf,
    pub index: DatasetIndex,
    pub corrections: Vec<RadiometricCorrection>,
    pub crops: Crops,
    pub pool: rayon::ThreadPool,
}

pub fn load_stages(cfg: &PipelineConfig) -> AppResult<Loaded> {
    cfg.validate()?;
    let root = cfg.dataset()?.to_path_buf();
    let pool = thread_pool(cfg.jobs)?;
    let index = timed("load", || load_dataset(&root))?;
    let reference = load_grey_reference(cfg.grey_reference.as_deref())?;
    let corrections = timed("calibrate", || {
        index
            .sessions
            .iter()
            .map(|s| session_correction(&root, s, &reference))
            .collect::<AppResult<Vec<_>>>()
    })?;
    let crops = timed("tile", || {
        prepare_crops(&root, &index, &corrections, cfg, &pool)
    })?;
    log::info!("{} crops from {} frames", crops.len(), index.frame_count());
    Ok(Loaded {
        root,
        index,
        corrections,
        crops,
        pool,
    })
}

pub fn scorer_stage(crops: &Crops, cfg: &PipelineConfig) -> AppResult<PixelScorer> {
    timed("scorer", || match (&cfg.scorer, cfg.train) {
        (_, true) => train_stage(crops, cfg),
        (Some(path), false) => load_scorer(path),
        (None, false) => Err(AppError::Usage(
            "no scorer: pass --scorer FILE or --train".into(),
        )),
    })
}

/// Full pipeline into `cfg.output`.
pub fn cmd_run(cfg: &PipelineConfig, force: bool) -> AppResult<RunSummary> {
    let out = cfg.output()?.to_path_buf();
    if !cfg.train && cfg.scorer.is_none() {
        return Err(AppError::Usage(
            "no scorer: pass --scorer FILE or --train".into(),
        ));
    }
    let palette = load_palette(cfg.palette.as_deref())?;
    let loaded = load_stages(cfg)?;
    let Loaded {
        root,
        index,
        corrections,
        crops,
        pool,
    } = &loaded;

    write_atomically(&out, force, |dir| {
        write_json(&dir.join(INDEX_JSON), index).stage("report")?;
        for (s, c) in index.sessions.iter().zip(corrections) {
            let path = dir
                .join(CALIBRATION_DIR)
                .join(&s.bog_id)
                .join(format!("{}.json", s.date));
            write_json(&path, c).stage("report")?;
        }
        let (hists, series) = if crops.is_empty() {
            log::warn!("dataset is empty; writing empty reports");
            (Vec::new(), Vec::new())
        } else {
            let scorer = scorer_stage(crops, cfg)?;
            if cfg.train {
                write_json(&dir.join(SCORER_JSON), &scorer).stage("report")?;
            }
            let masks = timed("segment", || segment_stage(crops, &scorer, cfg, pool))?;
            timed("masks", || write_masks(&dir.join(MASKS_DIR), crops, &masks))?;
            let model = timed("color-model", || color_stage(crops, &masks, cfg))?;
            write_json(&dir.join(COLOR_MODEL_JSON), &model).stage("report")?;
            let cls = timed("classify", || classify_stage(crops, &masks, &model, pool))?;
            let hists = histogram_stage(crops, &cls);
            let series = timed("timeline", || timeline_stage(&hists, cfg))?;
            (hists, series)
        };
        timed("report", || write_reports(dir, &hists, &series, &palette))?;
        let bogs = index
            .sessions
            .iter()
            .map(|s| s.bog_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let manifest = manifest(cfg, root, crops.len(), bogs).stage("report")?;
        write_json(&dir.join(MANIFEST_JSON), &manifest).stage("report")?;
        Ok(RunSummary {
            output: out.clone(),
            manifest,
            histograms: hists,
            series,
        })
    })
}
