use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::depth::{downsample_nearest, normals_from_depth, DepthMap};
use crate::{Error, Result};

/// Synthetic sensor model for the low-quality domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    /// Noise standard deviation in mm at 1 m; grows with depth squared.
    pub noise_coeff: f64,
    /// Quantization step in mm (0 disables).
    pub quant_step: f64,
    /// Pixels whose surface meets the view axis at less than this grazing
    /// angle (degrees, repo normal convention) become holes. 0 disables.
    pub grazing_deg: f64,
    /// Blob holes per 1000 pixels.
    pub blob_rate: f64,
    /// Nearest-neighbor downsampling factor (1 keeps the resolution).
    pub downsample: usize,
}

/// Blob radius range in pixels.
pub const BLOB_RADIUS: (f64, f64) = (1.0, 3.0);

impl DegradationSpec {
    /// No noise, no holes, only resampling.
    pub fn none(downsample: usize) -> Self {
        Self {
            noise_coeff: 0.0,
            quant_step: 0.0,
            grazing_deg: 0.0,
            blob_rate: 0.0,
            downsample,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.noise_coeff, self.quant_step, self.grazing_deg, self.blob_rate];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.grazing_deg > 90.0 {
            return Err(Error::InvalidArgument(format!("degradation parameters {self:?}")));
        }
        if self.downsample == 0 {
            return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            noise_coeff: 4.0,
            quant_step: 1.0,
            grazing_deg: 86.0,
            blob_rate: 1.0,
            downsample: 1,
        }
    }
}

/// Noise, quantization, grazing-angle holes and blob holes at full
/// resolution, then nearest downsampling.
pub fn degrade(clean: &DepthMap, spec: &DegradationSpec, seed: u64) -> Result<DepthMap> {
    spec.validate()?;
    let (w, h) = clean.dims();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let mut out: Vec<f64> = clean
        .data()
        .iter()
        .map(|&d| {
            if d <= 0.0 {
                return 0.0;
            }
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            let sigma = spec.noise_coeff * (d / 1000.0).powi(2);
            let mut v = (d + sigma * z).max(0.0);
            if spec.quant_step > 0.0 {
                v = (v / spec.quant_step).round() * spec.quant_step;
            }
            v
        })
        .collect();

    if spec.grazing_deg > 0.0 && !clean.is_empty() {
        // tilt from the view axis above 90° - grazing
        let min_nz = (90.0 - spec.grazing_deg).to_radians().cos();
        let normals = normals_from_depth(clean, 1)?;
        for (i, v) in out.iter_mut().enumerate() {
            if normals.valid()[i] && normals.normals()[i][2] < min_nz {
                *v = 0.0;
            }
        }
    }

    // Blobs come from their own stream so a higher rate only appends blobs.
    let blobs = (spec.blob_rate * (w * h) as f64 / 1000.0).round() as usize;
    let mut blob_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    for _ in 0..blobs {
        let cx = blob_rng.random_range(0.0..w as f64);
        let cy = blob_rng.random_range(0.0..h as f64);
        let r = blob_rng.random_range(BLOB_RADIUS.0..BLOB_RADIUS.1);
        let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(w));
        let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(h));
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    out[y * w + x] = 0.0;
                }
            }
        }
    }
    downsample_nearest(&DepthMap::new(w, h, out)?, spec.downsample)
}
