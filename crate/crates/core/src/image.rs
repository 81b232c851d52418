//! RGB raster type and frame tiling.
//!
//! Pixels are stored as `f32` channels in `[0, 1]`, row-major, interleaved
//! `R, G, B`. Conversion to and from 8-bit happens only at the I/O boundary.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One RGB pixel.
pub type Rgb = [f32; 3];

/// A float RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
    calibrated: bool,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            calibrated: false,
        })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self::new(width, height, data)
    }

    /// Decode 8-bit interleaved RGB.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }

    /// Encode to 8-bit interleaved RGB, rounding to nearest and clamping.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub fn with_calibrated(mut self, calibrated: bool) -> Self {
        self.calibrated = calibrated;
        self
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Copy out a sub-rectangle. The crop inherits the calibration flag.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidImage(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
            calibrated: self.calibrated,
        })
    }
}

/// Clamp every channel into `[0, 1]`. Rejects NaN and infinite values.
pub fn clamp_unit(image: &Image) -> Result<Image> {
    let mut out = image.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        if !v.is_finite() {
            let p = i / 3;
            return Err(Error::NonFinitePixel {
                x: p % image.width,
                y: p / image.width,
            });
        }
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Non-overlapping crop layout over a frame.
///
/// Defaults to 456 px wide by 608 px tall crops, which tiles a 3648x5472
/// frame into 8 columns by 9 rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropGrid {
    pub crop_w: usize,
    pub crop_h: usize,
    pub cols: usize,
    pub rows: usize,
}

pub const DEFAULT_CROP_W: usize = 456;
pub const DEFAULT_CROP_H: usize = 608;

impl CropGrid {
    /// Largest grid of `crop_w x crop_h` crops that fits in the frame.
    pub fn fit(frame_w: usize, frame_h: usize, crop_w: usize, crop_h: usize) -> Result<Self> {
        if crop_w == 0 || crop_h == 0 {
            return Err(Error::InvalidGrid(format!(
                "crop size must be positive, got {crop_w}x{crop_h}"
            )));
        }
        if frame_w < crop_w || frame_h < crop_h {
            return Err(Error::FrameTooSmall {
                width: frame_w,
                height: frame_h,
                crop_w,
                crop_h,
            });
        }
        Ok(Self {
            crop_w,
            crop_h,
            cols: frame_w / crop_w,
            rows: frame_h / crop_h,
        })
    }

    pub fn count(&self) -> usize {
        self.cols * self.rows
    }

    /// Pixels left uncovered on the right and bottom edges.
    pub fn margins(&self, frame_w: usize, frame_h: usize) -> (usize, usize) {
        (
            frame_w.saturating_sub(self.cols * self.crop_w),
            frame_h.saturating_sub(self.rows * self.crop_h),
        )
    }
}

/// One crop of a frame and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub image: Image,
    pub row: usize,
    pub col: usize,
    /// Top-left corner of the crop in frame coordinates.
    pub origin: (usize, usize),
}

/// Cut a frame into the crops of `grid`, row-major. Margin pixels past the
/// last full row and column are dropped.
pub fn tile_frame(frame: &Image, grid: &CropGrid) -> Result<Vec<Tile>> {
    if frame.width < grid.crop_w || frame.height < grid.crop_h {
        return Err(Error::FrameTooSmall {
            width: frame.width,
            height: frame.height,
            crop_w: grid.crop_w,
            crop_h: grid.crop_h,
        });
    }
    if grid.cols == 0
        || grid.rows == 0
        || grid.cols * grid.crop_w > frame.width
        || grid.rows * grid.crop_h > frame.height
    {
        return Err(Error::InvalidGrid(format!(
            "{}x{} grid of {}x{} crops does not fit a {}x{} frame",
            grid.cols, grid.rows, grid.crop_w, grid.crop_h, frame.width, frame.height
        )));
    }
    let mut tiles = Vec::with_capacity(grid.count());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let origin = (col * grid.crop_w, row * grid.crop_h);
            tiles.push(Tile {
                image: frame.crop(origin.0, origin.1, grid.crop_w, grid.crop_h)?,
                row,
                col,
                origin,
            });
        }
    }
    Ok(tiles)
}

/// Paste tiles back at their origins onto a zeroed canvas.
pub fn assemble_tiles(width: usize, height: usize, tiles: &[Tile]) -> Result<Image> {
    let mut canvas = Image::new(width, height, vec![0.0; width * height * 3])?;
    for tile in tiles {
        let (ox, oy) = tile.origin;
        if ox + tile.image.width > width || oy + tile.image.height > height {
            return Err(Error::InvalidGrid(format!(
                "tile at ({ox}, {oy}) exceeds {width}x{height} canvas"
            )));
        }
        for y in 0..tile.image.height {
            let src = y * tile.image.width * 3;
            let dst = ((oy + y) * width + ox) * 3;
            canvas.data[dst..dst + tile.image.width * 3]
                .copy_from_slice(&tile.image.data[src..src + tile.image.width * 3]);
        }
    }
    Ok(canvas)
}
