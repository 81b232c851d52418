//! On-disk dataset layout.
//!
//! ```text
//! root/<bog>/bog.json                  {"variety": "Stevens"}
//! root/<bog>/<YYYY-MM-DD>/frames/*.png
//! root/<bog>/<YYYY-MM-DD>/annotations.json
//! root/<bog>/<YYYY-MM-DD>/card.png + patches.json  (or calibration.json)
//! root/<bog>/<YYYY-MM-DD>/truth/<crop id>.png     (optional)
//! ```
//!
//! Annotations are a JSON list of `{image_id, points: [[x, y], ...]}` where
//! `image_id` is a frame's file stem and points are frame pixels.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use cranscope_core::calibration::{Rect, GREY_PATCHES};
use cranscope_core::meta::{parse_date, PointAnnotation, Variety};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult, DataExt};
use crate::io::{image_dimensions, read_json, write_json};

pub const BOG_FILE: &str = "bog.json";
pub const FRAMES_DIR: &str = "frames";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const CARD_FILE: &str = "card.png";
pub const PATCHES_FILE: &str = "patches.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const TRUTH_DIR: &str = "truth";
pub const MASKS_DIR: &str = "masks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BogInfo {
    pub variety: Variety,
}

/// Where a session's radiometric correction comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationSource {
    Card {
        card: String,
        patches: [Rect; GREY_PATCHES],
    },
    Stored {
        path: String,
    },
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub stem: String,
    pub width: usize,
    pub height: usize,
    /// `None` marks an unlabeled frame.
    pub annotation: Option<PointAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub bog_id: String,
    pub variety: Variety,
    pub date: NaiveDate,
    /// Session directory relative to the root.
    pub dir: String,
    pub calibration: CalibrationSource,
    pub frames: Vec<FrameEntry>,
}

/// Every capture session under a root, ordered by bog then date; frames
/// ordered by file name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub sessions: Vec<SessionEntry>,
}

impl DatasetIndex {
    pub fn frame_count(&self) -> usize {
        self.sessions.iter().map(|s| s.frames.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_count() == 0
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        read_json(path)
    }
}

/// Identifier of the crop at grid cell (`row`, `col`) of frame `stem`.
pub fn crop_id(stem: &str, row: usize, col: usize) -> String {
    format!("{stem}_r{row}c{col}")
}

fn sorted_entries(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| AppError::file(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| AppError::file(dir, err)))
        .collect::<AppResult<_>>()?;
    out.retain(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| !n.starts_with('.'))
    });
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Index the dataset under `root`.
pub fn load_dataset(root: &Path) -> AppResult<DatasetIndex> {
    if !root.is_dir() {
        return Err(AppError::file(root, "dataset directory does not exist"));
    }
    let mut sessions = Vec::new();
    for bog_dir in sorted_entries(root)? {
        if !bog_dir.is_dir() {
            continue;
        }
        let bog_id = file_name(&bog_dir);
        let date_dirs: Vec<PathBuf> = sorted_entries(&bog_dir)?
            .into_iter()
            .filter(|p| p.is_dir())
            .collect();
        if date_dirs.is_empty() {
            log::warn!("bog {bog_id} has no session directories");
            continue;
        }
        let info: BogInfo = read_json(&bog_dir.join(BOG_FILE))?;
        for date_dir in date_dirs {
            let name = file_name(&date_dir);
            let Ok(date) = parse_date(&name) else {
                log::warn!(
                    "skipping {}: not a YYYY-MM-DD directory",
                    date_dir.display()
                );
                continue;
            };
            sessions.push(load_session(root, &date_dir, &bog_id, info.variety, date)?);
        }
    }
    let index = DatasetIndex { sessions };
    if index.is_empty() {
        log::warn!("no frames found under {}", root.display());
    }
    Ok(index)
}

fn load_session(
    root: &Path,
    dir: &Path,
    bog_id: &str,
    variety: Variety,
    date: NaiveDate,
) -> AppResult<SessionEntry> {
    let frames_dir = dir.join(FRAMES_DIR);
    let mut frames = Vec::new();
    if frames_dir.is_dir() {
        for p in sorted_entries(&frames_dir)? {
            let is_png = p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if !is_png {
                continue;
            }
            let (width, height) = image_dimensions(&p)?;
            frames.push(FrameEntry {
                path: relative(root, &p),
                stem: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                width,
                height,
                annotation: None,
            });
        }
    } else {
        log::warn!("{} has no {FRAMES_DIR}/ directory", dir.display());
    }

    let ann_path = dir.join(ANNOTATIONS_FILE);
    if ann_path.is_file() {
        let anns: Vec<PointAnnotation> = read_json(&ann_path)?;
        let mut by_id: BTreeMap<String, PointAnnotation> = BTreeMap::new();
        for ann in anns {
            let frame = frames
                .iter()
                .find(|f| f.stem == ann.image_id)
                .ok_or_else(|| {
                    AppError::file(&ann_path, format!("no frame named {:?}", ann.image_id))
                })?;
            ann.validate(frame.width, frame.height)
                .context(|| ann_path.display().to_string())?;
            if by_id.insert(ann.image_id.clone(), ann).is_some() {
                return Err(AppError::file(&ann_path, "duplicate image_id entry"));
            }
        }
        for f in &mut frames {
            f.annotation = by_id.remove(&f.stem);
        }
    }

    let card = dir.join(CARD_FILE);
    let patches = dir.join(PATCHES_FILE);
    let stored = dir.join(CALIBRATION_FILE);
    let calibration = if card.is_file() && patches.is_file() {
        CalibrationSource::Card {
            card: relative(root, &card),
            patches: read_json(&patches)?,
        }
    } else if stored.is_file() {
        CalibrationSource::Stored {
            path: relative(root, &stored),
        }
    } else {
        CalibrationSource::Missing
    };

    Ok(SessionEntry {
        bog_id: bog_id.to_string(),
        variety,
        date,
        dir: relative(root, dir),
        calibration,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_rgb;
    use cranscope_core::image::Image;

    fn frame(root: &Path, bog: &str, date: &str, name: &str, w: usize, h: usize) {
        let img = Image::filled(w, h, [0.2, 0.4, 0.1]).unwrap();
        write_rgb(&root.join(bog).join(date).join(FRAMES_DIR).join(name), &img).unwrap();
    }

    fn bog(root: &Path, bog: &str, variety: &str) {
        fs::create_dir_all(root.join(bog)).unwrap();
        fs::write(
            root.join(bog).join(BOG_FILE),
            format!("{{\"variety\":\"{variety}\"}}"),
        )
        .unwrap();
    }

    #[test]
    fn indexes_bogs_dates_and_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for b in ["B7", "A5"] {
            bog(root, b, "Haines");
            for d in ["2022-08-16", "2022-08-02", "2022-08-25"] {
                frame(root, b, d, "f0.png", 8, 6);
            }
        }
        let index = load_dataset(root).unwrap();
        assert_eq!(index.frame_count(), 6);
        let order: Vec<(String, String)> = index
            .sessions
            .iter()
            .map(|s| (s.bog_id.clone(), s.date.to_string()))
            .collect();
        assert_eq!(order[0], ("A5".into(), "2022-08-02".into()));
        assert_eq!(order[2], ("A5".into(), "2022-08-25".into()));
        assert_eq!(order[3], ("B7".into(), "2022-08-02".into()));
        assert_eq!(
            index.sessions[0].frames[0].path,
            "A5/2022-08-02/frames/f0.png"
        );
        assert!(index.sessions[0].frames[0].annotation.is_none());
        assert_eq!(index.sessions[0].calibration, CalibrationSource::Missing);
        assert_eq!(load_dataset(root).unwrap(), index);
    }

    #[test]
    fn empty_root_gives_empty_index() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn missing_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(&dir.path().join("nope")).is_err());
    }

    #[test]
    fn out_of_bounds_point_names_the_crop() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        bog(root, "A5", "MullicaQueen");
        frame(root, "A5", "2022-08-02", "crop_07.png", 456, 608);
        fs::write(
            root.join("A5/2022-08-02").join(ANNOTATIONS_FILE),
            r#"[{"image_id": "crop_07", "points": [[500, 700]]}]"#,
        )
        .unwrap();
        let err = load_dataset(root).unwrap_err().to_string();
        assert!(err.contains("crop_07"), "{err}");
    }

    #[test]
    fn annotations_attach_to_frames() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        bog(root, "K4", "Stevens");
        frame(root, "K4", "2022-08-02", "a.png", 20, 20);
        frame(root, "K4", "2022-08-02", "b.png", 20, 20);
        fs::write(
            root.join("K4/2022-08-02").join(ANNOTATIONS_FILE),
            r#"[{"image_id": "b", "points": [[3, 4], [10, 12]]}]"#,
        )
        .unwrap();
        let index = load_dataset(root).unwrap();
        let frames = &index.sessions[0].frames;
        assert!(frames[0].annotation.is_none());
        assert_eq!(
            frames[1].annotation.as_ref().unwrap().points,
            vec![(3, 4), (10, 12)]
        );
    }

    #[test]
    fn index_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        bog(&root, "A4", "CrimsonQueen");
        frame(&root, "A4", "2022-08-02", "f.png", 5, 5);
        let index = load_dataset(&root).unwrap();
        let cache = dir.path().join("index.json");
        index.save(&cache).unwrap();
        assert_eq!(DatasetIndex::load(&cache).unwrap(), index);
    }

    #[test]
    fn crop_ids() {
        assert_eq!(crop_id("f000", 0, 0), "f000_r0c0");
        assert_eq!(crop_id("DJI_12", 7, 8), "DJI_12_r7c8");
    }
}
