//! Pipeline configuration, loaded from TOML or JSON and overridable by flags.

use std::fs;
use std::path::{Path, PathBuf};

use cranscope_core::albedo::DEFAULT_K;
use cranscope_core::image::{DEFAULT_CROP_H, DEFAULT_CROP_W};
use cranscope_core::segmentation::{SegParams, TrainConfig};
use cranscope_core::timeline::RiskConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub scorer: Option<PathBuf>,
    pub color_model: Option<PathBuf>,
    pub grey_reference: Option<PathBuf>,
    pub palette: Option<PathBuf>,
    /// Fit the scorer from annotated crops instead of loading it.
    pub train: bool,
    pub segmentation: SegParams,
    pub training: TrainConfig,
    pub risk: RiskConfig,
    /// Raw color clusters before folding into five classes.
    pub k: usize,
    pub color_seed: u64,
    /// Berry pixels sampled to fit the color model.
    pub color_sample: usize,
    pub crop_width: usize,
    pub crop_height: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            output: None,
            scorer: None,
            color_model: None,
            grey_reference: None,
            palette: None,
            train: false,
            segmentation: SegParams::default(),
            training: TrainConfig::default(),
            risk: RiskConfig::default(),
            k: DEFAULT_K,
            color_seed: 0,
            color_sample: 50_000,
            crop_width: DEFAULT_CROP_W,
            crop_height: DEFAULT_CROP_H,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    /// Read a `.toml` or `.json` file.
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::file(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext.to_ascii_lowercase().as_str() {
            "toml" => toml::from_str(&text).map_err(|e| AppError::file(path, e)),
            "json" => serde_json::from_str(&text).map_err(|e| AppError::file(path, e)),
            _ => Err(AppError::Usage(format!(
                "config {} must end in .toml or .json",
                path.display()
            ))),
        }
    }

    pub fn dataset(&self) -> AppResult<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| AppError::Usage("no dataset given (--dataset)".into()))
    }

    pub fn output(&self) -> AppResult<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| AppError::Usage("no output given (--out)".into()))
    }

    /// Check parameters and that every referenced input exists.
    pub fn validate(&self) -> AppResult<()> {
        let usage = |e: cranscope_core::Error| AppError::Usage(e.to_string());
        self.segmentation.validate().map_err(usage)?;
        self.risk.validate().map_err(usage)?;
        if self.k < cranscope_core::albedo::CLASSES {
            return Err(AppError::Usage(format!(
                "k must be at least 5, got {}",
                self.k
            )));
        }
        if self.color_sample == 0 || self.crop_width == 0 || self.crop_height == 0 {
            return Err(AppError::Usage(
                "color sample and crop size must be positive".into(),
            ));
        }
        if !(self.training.learning_rate > 0.0) {
            return Err(AppError::Usage("learning rate must be positive".into()));
        }
        let inputs = [
            ("dataset", &self.dataset),
            ("scorer", &self.scorer),
            ("color model", &self.color_model),
            ("grey reference", &self.grey_reference),
            ("palette", &self.palette),
        ];
        for (what, path) in inputs {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(AppError::Usage(format!(
                        "{what} {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Hash of every setting that can change results. Paths and the worker
    /// count are excluded; input contents are hashed separately.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.dataset = None;
        canonical.output = None;
        canonical.jobs = 0;
        let flags = (
            canonical.scorer.take().is_some(),
            canonical.color_model.take().is_some(),
            canonical.grey_reference.take().is_some(),
            canonical.palette.take().is_some(),
        );
        let json = serde_json::to_vec(&(canonical, flags)).expect("config serializes");
        sha256_hex(&json)
    }
}
