use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;

pub const DEFAULT_APPLY_PROB: f64 = 0.9;
/// Inclusive range of the number of rectangles.
pub const HOLE_COUNT: (usize, usize) = (10, 75);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoleRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Allowed rectangle side range `[extent/128, extent/8]`, at least 1 px.
pub fn size_window(extent: usize) -> (usize, usize) {
    let lo = ((extent as f64 / 128.0).round() as usize).max(1);
    let hi = ((extent as f64 / 8.0).round() as usize).max(lo).min(extent.max(1));
    (lo, hi)
}

/// Draws whether to augment and, if so, the rectangles. `None` means the
/// input is left unchanged.
pub fn sample_hole_plan(width: usize, height: usize, rng: &mut impl Rng, apply_prob: f64) -> Option<Vec<HoleRect>> {
    if width == 0 || height == 0 || !rng.random_bool(apply_prob.clamp(0.0, 1.0)) {
        return None;
    }
    let n = rng.random_range(HOLE_COUNT.0..=HOLE_COUNT.1);
    let (hl, hh) = (height as f64 / 128.0, height as f64 / 8.0);
    let (wl, wh) = (width as f64 / 128.0, width as f64 / 8.0);
    fn side(rng: &mut impl Rng, lo: f64, hi: f64, extent: usize) -> usize {
        let v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        (v.round() as usize).clamp(1, extent)
    }
    Some(
        (0..n)
            .map(|_| {
                let rh = side(rng, hl, hh, height);
                let rw = side(rng, wl, wh, width);
                HoleRect {
                    x: rng.random_range(0..=width - rw),
                    y: rng.random_range(0..=height - rh),
                    width: rw,
                    height: rh,
                }
            })
            .collect(),
    )
}

/// Zeroes each rectangle in a row-major `width`-wide raster.
pub fn apply_holes<T: Copy + num_traits::Zero>(data: &mut [T], width: usize, rects: &[HoleRect]) {
    for r in rects {
        for y in r.y..r.y + r.height {
            data[y * width + r.x..y * width + r.x + r.width].fill(T::zero());
        }
    }
}

/// With probability `apply_prob`, zeroes 10 to 75 random rectangles.
pub fn augment_holes(d: &DepthMap, seed: u64, apply_prob: f64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match sample_hole_plan(d.width(), d.height(), &mut rng, apply_prob) {
        None => d.clone(),
        Some(rects) => {
            let mut data = d.data().to_vec();
            apply_holes(&mut data, d.width(), &rects);
            DepthMap::from_raw(d.width(), d.height(), data)
        }
    }
}
