#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod error;
pub mod image;
pub mod meta;
pub mod segmentation;

pub use error::{Error, Result};
pub mod albedo;
pub mod synth;
pub mod timeline;
