use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Single-channel depth raster in millimeters, row-major. `0` is a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width * height != data.len() {
            return Err(Error::Dimension(format!(
                "{width}x{height} depth map needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "depth values must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds from values already known to satisfy the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, data.len());
        debug_assert!(data.iter().all(|v| *v >= 0.0));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_raw(width, height, vec![0.0; width * height])
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_raw(width, height, vec![value.max(0.0); width * height])
    }

    /// Evaluates `f(x, y)` per pixel; negative results are clamped to zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).max(0.0));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value.max(0.0);
    }

    /// Largest defined depth, `0` for an all-hole map.
    pub fn max_depth(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn count_holes(&self) -> usize {
        self.data.iter().filter(|v| **v == 0.0).count()
    }

    /// Rectangular crop starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Dimension(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Ok(Self::from_raw(width, height, data))
    }
}

/// Three-channel color image with values in `[0, 1]`, stored planar
/// (all red, then green, then blue).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    /// Values are clamped to `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if 3 * width * height != data.len() {
            return Err(Error::Dimension(format!(
                "{width}x{height} rgb image needs {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("rgb values must be finite".into()));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let n = width * height;
        let mut data = Vec::with_capacity(3 * n);
        for c in rgb {
            data.extend(std::iter::repeat_n(c.clamp(0.0, 1.0), n));
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Dimension("rgb crop out of bounds".into()));
        }
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Luminance with Rec. 601 weights.
    pub fn luminance(&self) -> Vec<f64> {
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }
}

/// Per-pixel unit normals `(nx, ny, nz)` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) normals: Vec<[f64; 3]>,
    pub(crate) valid: Vec<bool>,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Normal at `(x, y)`, or `None` where it is undefined.
    pub fn get(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.normals[i])
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// `true` where depth is defined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleMask {
    width: usize,
    height: usize,
    defined: Vec<bool>,
}

impl HoleMask {
    pub(crate) fn new(width: usize, height: usize, defined: Vec<bool>) -> Self {
        Self {
            width,
            height,
            defined,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn defined(&self) -> &[bool] {
        &self.defined
    }

    pub fn is_defined(&self, x: usize, y: usize) -> bool {
        self.defined[y * self.width + x]
    }

    pub fn count_defined(&self) -> usize {
        self.defined.iter().filter(|v| **v).count()
    }
}

/// A color image registered with a depth map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbdFrame {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub scene_id: String,
    pub frame_id: String,
}

impl RgbdFrame {
    pub fn new(
        rgb: RgbImage,
        depth: DepthMap,
        scene_id: impl Into<String>,
        frame_id: impl Into<String>,
    ) -> Result<Self> {
        if rgb.dims() != depth.dims() {
            return Err(Error::Dimension(format!(
                "rgb {:?} vs depth {:?}",
                rgb.dims(),
                depth.dims()
            )));
        }
        Ok(Self {
            rgb,
            depth,
            scene_id: scene_id.into(),
            frame_id: frame_id.into(),
        })
    }
}
