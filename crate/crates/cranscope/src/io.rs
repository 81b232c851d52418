//! File formats: PNG rasters, 16-bit instance masks, JSON documents.

use std::fs;
use std::path::Path;

use cranscope_core::calibration::GreyReference;
use cranscope_core::image::Image;
use cranscope_core::segmentation::SegmentationMask;
use cranscope_core::synth::Palette;
use image::{ImageBuffer, Luma, RgbImage};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult, DataExt};

const DEFAULT_GREY_REFERENCE: &str = include_str!("../config/grey_reference.json");
const DEFAULT_PALETTE: &str = include_str!("../config/palette.json");

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::file(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::file(path, e))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| AppError::file(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::file(path, e))
}

pub fn read_rgb(path: &Path) -> AppResult<Image> {
    let img = image::open(path)
        .map_err(|e| AppError::file(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Image::from_rgb8(w as usize, h as usize, img.as_raw()).context(|| path.display().to_string())
}

pub fn write_rgb(path: &Path, image: &Image) -> AppResult<()> {
    let buf = RgbImage::from_raw(image.width() as u32, image.height() as u32, image.to_rgb8())
        .ok_or_else(|| AppError::file(path, "image buffer has the wrong size"))?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| AppError::file(parent, e))?;
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| AppError::file(path, e))
}

pub fn image_dimensions(path: &Path) -> AppResult<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| AppError::file(path, e))?;
    Ok((w as usize, h as usize))
}

/// Row of the JSON table stored next to a mask PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub area: usize,
    pub centroid: [f64; 2],
    pub convexity: f64,
    pub mean_rgb: [f64; 3],
}

/// Write `<path>` as a 16-bit instance-id PNG and `<path>.json` beside it
/// (same stem, `.json` extension).
pub fn write_mask(path: &Path, mask: &SegmentationMask) -> AppResult<()> {
    let ids: Vec<u16> = mask
        .ids()
        .iter()
        .map(|&id| u16::try_from(id))
        .collect::<Result<_, _>>()
        .map_err(|_| AppError::file(path, "more than 65535 instances"))?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, ids)
            .ok_or_else(|| AppError::file(path, "mask buffer has the wrong size"))?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| AppError::file(parent, e))?;
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| AppError::file(path, e))?;
    let table: Vec<InstanceRecord> = mask
        .instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| InstanceRecord {
            id: i as u32 + 1,
            area: inst.area,
            centroid: [inst.centroid.0, inst.centroid.1],
            convexity: inst.convexity,
            mean_rgb: inst.mean_rgb,
        })
        .collect();
    write_json(&path.with_extension("json"), &table)
}

/// Read an instance-id PNG. `image` supplies instance colors when given.
pub fn read_mask(path: &Path, image: Option<&Image>) -> AppResult<SegmentationMask> {
    let buf = image::open(path)
        .map_err(|e| AppError::file(path, e))?
        .into_luma16();
    let (w, h) = buf.dimensions();
    let raster: Vec<u32> = buf.as_raw().iter().map(|&v| u32::from(v)).collect();
    SegmentationMask::from_id_raster(w as usize, h as usize, &raster, image)
        .context(|| path.display().to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> AppResult<String> {
    let bytes = fs::read(path).map_err(|e| AppError::file(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Grey reference from `path`, or the bundled default.
pub fn load_grey_reference(path: Option<&Path>) -> AppResult<GreyReference> {
    match path {
        Some(p) => read_json(p),
        None => Ok(serde_json::from_str(DEFAULT_GREY_REFERENCE).expect("bundled reference parses")),
    }
}

/// Class palette from `path`, or the bundled default.
pub fn load_palette(path: Option<&Path>) -> AppResult<Palette> {
    match path {
        Some(p) => read_json(p),
        None => Ok(serde_json::from_str(DEFAULT_PALETTE).expect("bundled palette parses")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cranscope_core::segmentation::BerryInstance;

    #[test]
    fn bundled_defaults_match_core() {
        assert_eq!(load_grey_reference(None).unwrap(), GreyReference::default());
        assert_eq!(load_palette(None).unwrap(), Palette::default());
    }

    #[test]
    fn png_round_trip_within_one_level() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..4 * 3 * 3).map(|i| (i as f32 * 0.0371) % 1.0).collect();
        let img = Image::new(4, 3, data).unwrap();
        let path = dir.path().join("a.png");
        write_rgb(&path, &img).unwrap();
        let back = read_rgb(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
        assert_eq!(image_dimensions(&path).unwrap(), (4, 3));
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = BerryInstance::from_pixels(vec![(0, 0), (1, 0)], None);
        let b = BerryInstance::from_pixels(vec![(3, 2)], None);
        let mask = SegmentationMask::from_instances(4, 3, vec![a, b]).unwrap();
        let path = dir.path().join("m.png");
        write_mask(&path, &mask).unwrap();
        let back = read_mask(&path, None).unwrap();
        assert_eq!(back, mask);
        let table: Vec<InstanceRecord> = read_json(&dir.path().join("m.json")).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[1].area, 1);
    }

    #[test]
    fn malformed_json_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{").unwrap();
        let err = read_json::<GreyReference>(&path).unwrap_err();
        assert!(err.to_string().contains("bad.json"));
        assert_eq!(err.exit_code(), 2);
    }
}
