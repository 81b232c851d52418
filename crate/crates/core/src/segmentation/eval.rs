//! Foreground IoU and count error against ground truth.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SegmentationMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub iou: f64,
    pub count_error: usize,
}

/// Per-crop evaluation summary. Count MAE is averaged per image (crop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    pub count_mae: f64,
    pub per_image: Vec<ImageEval>,
}

/// Binary-foreground IoU; two empty masks agree perfectly.
pub fn foreground_iou(pred: &SegmentationMask, truth: &SegmentationMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.ids().iter().zip(truth.ids()) {
        let (p, t) = (p != 0, t != 0);
        inter += usize::from(p && t);
        union += usize::from(p || t);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Compare paired predictions and truths. `ids` names each pair; when
/// shorter than the lists, pairs are named by index.
pub fn evaluate(
    preds: &[SegmentationMask],
    truths: &[SegmentationMask],
    ids: &[String],
) -> Result<EvalReport> {
    if preds.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut per_image = Vec::with_capacity(preds.len());
    for (i, (p, t)) in preds.iter().zip(truths).enumerate() {
        let image_id = ids.get(i).cloned().unwrap_or_else(|| format!("{i}"));
        if p.width() != t.width() || p.height() != t.height() {
            return Err(Error::ShapeMismatch(format!(
                "{image_id}: prediction {}x{} vs truth {}x{}",
                p.width(),
                p.height(),
                t.width(),
                t.height()
            )));
        }
        per_image.push(ImageEval {
            image_id,
            iou: foreground_iou(p, t),
            count_error: p.instances().len().abs_diff(t.instances().len()),
        });
    }
    let n = per_image.len().max(1) as f64;
    Ok(EvalReport {
        miou: per_image.iter().map(|e| e.iou).sum::<f64>() / n,
        count_mae: per_image.iter().map(|e| e.count_error as f64).sum::<f64>() / n,
        per_image,
    })
}
