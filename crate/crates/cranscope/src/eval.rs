//! Compare predicted and true instance masks stored as PNG trees.

use std::collections::BTreeMap;
use std::path::{Component, Path};

use cranscope_core::segmentation::{evaluate, EvalReport};

use crate::dataset::{MASKS_DIR, TRUTH_DIR};
use crate::error::{AppError, AppResult, DataExt};
use crate::io::read_mask;

/// Mask PNGs under `dir`, keyed by relative path with any `truth` or
/// `masks` component dropped. When some files sit under such a component,
/// only those are taken, so a dataset root can be passed directly.
pub fn collect_masks(dir: &Path) -> AppResult<BTreeMap<String, std::path::PathBuf>> {
    if !dir.is_dir() {
        return Err(AppError::file(dir, "directory does not exist"));
    }
    let mut tagged = BTreeMap::new();
    let mut plain = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| AppError::file(dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !entry.file_type().is_file() || !is_png {
            continue;
        }
        let rel = path.strip_prefix(dir).unwrap_or(path);
        let mut marked = false;
        let parts: Vec<String> = rel
            .components()
            .filter_map(|c| match c {
                Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
                _ => None,
            })
            .filter(|s| {
                let marker = s == TRUTH_DIR || s == MASKS_DIR;
                marked |= marker;
                !marker
            })
            .collect();
        let key = parts.join("/");
        if marked {
            tagged.insert(key, path.to_path_buf());
        } else {
            plain.insert(key, path.to_path_buf());
        }
    }
    Ok(if tagged.is_empty() { plain } else { tagged })
}

pub fn cmd_eval(pred: &Path, truth: &Path) -> AppResult<EvalReport> {
    let preds = collect_masks(pred)?;
    let truths = collect_masks(truth)?;
    let missing: Vec<&String> = truths.keys().filter(|k| !preds.contains_key(*k)).collect();
    let extra: Vec<&String> = preds.keys().filter(|k| !truths.contains_key(*k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(AppError::file(
            pred,
            format!(
                "{} truth masks without prediction, {} predictions without truth (first: {:?})",
                missing.len(),
                extra.len(),
                missing.first().or(extra.first())
            ),
        ));
    }
    let mut p = Vec::with_capacity(preds.len());
    let mut t = Vec::with_capacity(preds.len());
    for (key, path) in &preds {
        p.push(read_mask(path, None)?);
        t.push(read_mask(&truths[key], None)?);
    }
    let ids: Vec<String> = preds.keys().cloned().collect();
    evaluate(&p, &t, &ids).context(|| pred.display().to_string())
}
