//! Depth, color and normal rasters plus the deterministic raster operations
//! used throughout the pipeline.
//!
//! Depth is stored in millimeters; a value of `0` marks a hole (missing
//! measurement). Networks work on depth normalized by [`MAX_DEPTH_MM`].

mod io;
mod normals;
mod resample;
mod types;

pub use io::{read_depth_png, read_rgb_png, write_depth_png, write_rgb_png};
pub use normals::normals_from_depth;
pub use resample::{bicubic_upsample, catmull_rom, downsample_nearest};
pub use types::{DepthMap, HoleMask, NormalMap, RgbImage, RgbdFrame};

/// Depth normalization constant and default range-filter threshold (5.1 m).
pub const MAX_DEPTH_MM: f64 = 5100.0;

/// Direction for [`normalize_depth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Millimeters to `[0, 1]`.
    ToUnit,
    /// `[0, 1]` back to millimeters.
    ToMm,
}

/// Maps depth between millimeters and the unit interval. Holes stay `0`.
pub fn normalize_depth(d: &DepthMap, direction: Normalization) -> DepthMap {
    let data = d
        .data()
        .iter()
        .map(|&v| match direction {
            Normalization::ToUnit => (v / MAX_DEPTH_MM).clamp(0.0, 1.0),
            Normalization::ToMm => v * MAX_DEPTH_MM,
        })
        .collect();
    DepthMap::from_raw(d.width(), d.height(), data)
}

/// Mask that is `true` wherever depth is defined (nonzero).
pub fn hole_mask(d: &DepthMap) -> HoleMask {
    HoleMask::new(
        d.width(),
        d.height(),
        d.data().iter().map(|&v| v > 0.0).collect(),
    )
}

/// Keeps frames whose largest defined depth does not exceed `max_depth_mm`.
pub fn depth_range_filter(frames: Vec<RgbdFrame>, max_depth_mm: f64) -> crate::Result<Vec<RgbdFrame>> {
    if !(max_depth_mm > 0.0) {
        return Err(crate::Error::InvalidArgument(format!(
            "max depth must be positive, got {max_depth_mm}"
        )));
    }
    Ok(frames
        .into_iter()
        .filter(|f| f.depth.max_depth() <= max_depth_mm)
        .collect())
}
