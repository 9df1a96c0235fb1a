use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::depth::{bicubic_upsample, DepthMap, RgbImage, MAX_DEPTH_MM};
use crate::{Error, Result};

/// One training frame at a single resolution. Tensors carry a leading batch
/// axis of 1 so batches are built with [`Tensor::stack`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[1, 3, H, W]` in `[0, 1]`.
    pub rgb: Tensor<f32>,
    /// `[1, 1, H, W]` normalized depth; 0 marks a hole.
    pub depth: Tensor<f32>,
    /// Precomputed guidance estimate `[1, 1, H, W]`.
    pub guidance: Option<Tensor<f32>>,
}

impl Sample {
    pub fn new(rgb: &RgbImage, depth: &DepthMap) -> Result<Self> {
        if rgb.dims() != depth.dims() {
            return Err(Error::Dimension(format!("rgb {:?} vs depth {:?}", rgb.dims(), depth.dims())));
        }
        Ok(Self {
            rgb: rgb_tensor(rgb),
            depth: depth_tensor(depth),
            guidance: None,
        })
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        let s = self.depth.shape();
        (s[3], s[2])
    }
}

pub fn rgb_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = img.dims();
    Tensor::new(vec![1, 3, h, w], img.data().iter().map(|&v| v as f32).collect()).expect("rgb planes")
}

/// Millimeters to `[0, 1]`.
pub fn depth_tensor(d: &DepthMap) -> Tensor<f32> {
    let (w, h) = d.dims();
    let data = d.data().iter().map(|&v| (v / MAX_DEPTH_MM) as f32).collect();
    Tensor::new(vec![1, 1, h, w], data).expect("depth plane")
}

/// Batch item `n` of a one-channel normalized tensor, in millimeters.
pub fn tensor_depth(t: &Tensor<f32>, n: usize) -> Result<DepthMap> {
    let item = t.batch_item(n)?;
    let (_, c, h, w) = item.dims4()?;
    if c != 1 {
        return Err(Error::shape("tensor_depth", format!("{:?}", item.shape())));
    }
    DepthMap::new(w, h, item.data().iter().map(|&v| v as f64 * MAX_DEPTH_MM).collect())
}

/// Box-filter downsampling of RGB by an integer factor.
pub fn downsample_rgb(img: &RgbImage, factor: usize) -> Result<RgbImage> {
    let (w, h) = img.dims();
    if factor == 0 || w % factor != 0 || h % factor != 0 {
        return Err(Error::InvalidArgument(format!("{w}x{h} not divisible by {factor}")));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (ow, oh) = (w / factor, h / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(3 * ow * oh);
    for c in 0..3 {
        let plane = img.channel(c);
        for y in 0..oh {
            for x in 0..ow {
                let mut s = 0.0;
                for dy in 0..factor {
                    let row = (y * factor + dy) * w + x * factor;
                    s += plane[row..row + factor].iter().sum::<f64>();
                }
                out.push(s * norm);
            }
        }
    }
    RgbImage::new(ow, oh, out)
}

/// Bicubic upsampling of a normalized depth tensor `[1, 1, H, W]`.
pub fn upsample_depth_tensor(t: &Tensor<f32>, factor: usize) -> Result<Tensor<f32>> {
    if factor == 1 {
        return Ok(t.clone());
    }
    Ok(depth_tensor(&bicubic_upsample(&tensor_depth(t, 0)?, factor)?))
}

/// Geometric augmentation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Augment {
    /// Right-angle rotations; quarter turns only for square frames.
    pub rotate: bool,
    pub hflip: bool,
    /// Random crop `[width, height]`; whole frames when absent.
    pub crop: Option<[usize; 2]>,
}

impl Augment {
    pub fn is_identity(&self) -> bool {
        !self.rotate && !self.hflip && self.crop.is_none()
    }
}

/// A drawn geometric transform: crop, then flip, then rotate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    flip: bool,
    quarter_turns: usize,
}

impl Geometry {
    fn draw(rng: &mut ChaCha8Rng, aug: &Augment, width: usize, height: usize) -> Result<Self> {
        let (w, h) = match aug.crop {
            Some([cw, ch]) if cw > width || ch > height || cw == 0 || ch == 0 => {
                return Err(Error::Config(format!("crop {cw}x{ch} does not fit {width}x{height}")));
            }
            Some([cw, ch]) => (cw, ch),
            None => (width, height),
        };
        let x0 = if w < width { rng.random_range(0..=width - w) } else { 0 };
        let y0 = if h < height { rng.random_range(0..=height - h) } else { 0 };
        let flip = aug.hflip && rng.random_bool(0.5);
        let quarter_turns = match (aug.rotate, w == h) {
            (false, _) => 0,
            (true, true) => rng.random_range(0..4),
            (true, false) => 2 * rng.random_range(0..2),
        };
        Ok(Self {
            x0,
            y0,
            w,
            h,
            flip,
            quarter_turns,
        })
    }

    /// Transforms every channel of a `[1, C, H, W]` tensor.
    fn apply(&self, t: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (_, c, height, width) = t.dims4()?;
        let (w, h) = (self.w, self.h);
        let (ow, oh) = if self.quarter_turns % 2 == 1 { (h, w) } else { (w, h) };
        let mut out = Vec::with_capacity(c * w * h);
        for ch in 0..c {
            let plane = &t.data()[ch * width * height..(ch + 1) * width * height];
            for oy in 0..oh {
                for ox in 0..ow {
                    // inverse rotation, counter-clockwise quarter turns
                    let (x, y) = match self.quarter_turns {
                        0 => (ox, oy),
                        1 => (w - 1 - oy, ox),
                        2 => (w - 1 - ox, h - 1 - oy),
                        _ => (oy, h - 1 - ox),
                    };
                    let x = if self.flip { w - 1 - x } else { x };
                    out.push(plane[(self.y0 + y) * width + self.x0 + x]);
                }
            }
        }
        Tensor::new(vec![1, c, oh, ow], out)
    }
}

/// Stacked samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub guidance: Option<Tensor<f32>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.depth.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws samples with replacement and applies one geometric transform per
/// sample to all of its planes.
pub fn draw_batch(rng: &mut ChaCha8Rng, set: &[Sample], n: usize, aug: &Augment) -> Result<Batch> {
    if set.is_empty() {
        return Err(Error::Empty("training set has no samples".into()));
    }
    let (mut rgb, mut depth, mut guidance) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::new());
    for _ in 0..n {
        let s = &set[rng.random_range(0..set.len())];
        let (w, h) = s.dims();
        let g = Geometry::draw(rng, aug, w, h)?;
        rgb.push(g.apply(&s.rgb)?);
        depth.push(g.apply(&s.depth)?);
        if let Some(t) = &s.guidance {
            guidance.push(g.apply(t)?);
        }
    }
    let guidance = match guidance.len() {
        0 => None,
        k if k == n => Some(Tensor::stack(&guidance)?),
        _ => return Err(Error::InvalidArgument("guidance present on only some samples".into())),
    };
    Ok(Batch {
        rgb: Tensor::stack(&rgb)?,
        depth: Tensor::stack(&depth)?,
        guidance,
    })
}
