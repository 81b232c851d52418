//! Per-pixel training labels synthesized from point clicks.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::PointAnnotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PseudoLabel {
    Background,
    Foreground,
    Ignore,
}

/// Disk-and-annulus labels around each annotated point.
///
/// Pixels within `r_fg` of a point are foreground, pixels within
/// `r_fg + r_ig` of a point (and not foreground) are ignored, the rest is
/// background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoMask {
    width: usize,
    height: usize,
    labels: Vec<PseudoLabel>,
}

impl PseudoMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn label(&self, x: usize, y: usize) -> PseudoLabel {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[PseudoLabel] {
        &self.labels
    }

    pub fn count(&self, label: PseudoLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

pub fn build_pseudo_mask(
    points: &PointAnnotation,
    shape: (usize, usize),
    r_fg: u32,
    r_ig: u32,
) -> Result<PseudoMask> {
    let (width, height) = shape;
    if r_fg < 1 {
        return Err(Error::InvalidParameter("r_fg must be at least 1".into()));
    }
    points.validate(width, height)?;

    let mut labels = vec![PseudoLabel::Background; width * height];
    let outer = i64::from(r_fg + r_ig);
    let fg2 = i64::from(r_fg) * i64::from(r_fg);
    let outer2 = outer * outer;

    for &(px, py) in &points.points {
        let (px, py) = (i64::from(px), i64::from(py));
        for y in (py - outer).max(0)..=(py + outer).min(height as i64 - 1) {
            for x in (px - outer).max(0)..=(px + outer).min(width as i64 - 1) {
                let d2 = (x - px) * (x - px) + (y - py) * (y - py);
                let slot = &mut labels[y as usize * width + x as usize];
                if d2 <= fg2 {
                    *slot = PseudoLabel::Foreground;
                } else if d2 <= outer2 && *slot == PseudoLabel::Background {
                    *slot = PseudoLabel::Ignore;
                }
            }
        }
    }

    Ok(PseudoMask {
        width,
        height,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::components::label_components;

    fn ann(points: Vec<(u32, u32)>) -> PointAnnotation {
        PointAnnotation {
            image_id: "t".into(),
            points,
        }
    }

    #[test]
    fn single_point_disk_and_annulus() {
        // Oracle: lattice points with dx^2 + dy^2 <= 9.
        let mut disk = 0;
        let mut ring = 0;
        for dy in -5i32..=5 {
            for dx in -5i32..=5 {
                let d2 = dx * dx + dy * dy;
                if d2 <= 9 {
                    disk += 1;
                } else if d2 <= 25 {
                    ring += 1;
                }
            }
        }
        assert_eq!(disk, 29);

        let m = build_pseudo_mask(&ann(vec![(10, 10)]), (20, 20), 3, 2).unwrap();
        assert_eq!(m.count(PseudoLabel::Foreground), 29);
        assert_eq!(m.count(PseudoLabel::Ignore), ring);
        assert_eq!(m.label(10, 10), PseudoLabel::Foreground);
        assert_eq!(m.label(10, 14), PseudoLabel::Ignore);
        assert_eq!(m.label(0, 0), PseudoLabel::Background);
    }

    #[test]
    fn no_points_is_all_background() {
        let m = build_pseudo_mask(&ann(vec![]), (8, 5), 3, 2).unwrap();
        assert_eq!(m.count(PseudoLabel::Background), 40);
    }

    #[test]
    fn close_points_merge_and_ignore_never_overwrites_foreground() {
        let m = build_pseudo_mask(&ann(vec![(10, 10), (12, 10)]), (30, 30), 3, 4).unwrap();
        let fg: Vec<bool> = m
            .labels()
            .iter()
            .map(|&l| l == PseudoLabel::Foreground)
            .collect();
        let comps = label_components(30, 30, &fg);
        assert_eq!(comps.len(), 1);
        // (13, 10) is 3 from the second point but inside the first's ignore ring
        assert_eq!(m.label(13, 10), PseudoLabel::Foreground);
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_pseudo_mask(&ann(vec![(25, 1)]), (20, 20), 3, 2).is_err());
        assert!(build_pseudo_mask(&ann(vec![(1, 1)]), (20, 20), 0, 2).is_err());
    }
}
