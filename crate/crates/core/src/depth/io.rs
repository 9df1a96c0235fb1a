use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use super::{DepthMap, RgbImage};
use crate::{Error, Result};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes depth as a 16-bit grayscale PNG (millimeters, rounded).
pub fn write_depth_png(d: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pixels: Vec<u16> = d
        .data()
        .iter()
        .map(|v| v.round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(d.width() as u32, d.height() as u32, pixels)
            .ok_or_else(|| image_err(path, "buffer size"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_depth_png(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(f64::from).collect();
    DepthMap::new(w as usize, h as usize, data)
}

/// Writes an 8-bit RGB PNG.
pub fn write_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = img.dims();
    let mut buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::new(w as u32, h as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let (x, y) = (x as usize, y as usize);
        for c in 0..3 {
            px.0[c] = (img.get(x, y, c) * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * w * h];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px.0[c] as f64 / 255.0;
        }
    }
    RgbImage::new(w, h, data)
}
