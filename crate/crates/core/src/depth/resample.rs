use super::DepthMap;
use crate::{Error, Result};

const CATMULL_ROM_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5` (Catmull-Rom).
#[inline]
pub fn catmull_rom(x: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn taps(out: usize, factor: usize, len: usize) -> Taps {
    let src = (out as f64 + 0.5) / factor as f64 - 0.5;
    let base = src.floor();
    let t = src - base;
    let base = base as i64;
    let mut index = [0; 4];
    let mut weight = [0.0; 4];
    for k in 0..4 {
        let offset = k as i64 - 1;
        index[k] = (base + offset).clamp(0, len as i64 - 1) as usize;
        weight[k] = catmull_rom(t - offset as f64);
    }
    Taps { index, weight }
}

/// Bicubic upsampling by an integer factor with edge clamping.
///
/// Output pixels whose (nonzero-weight) support touches a hole are holes;
/// negative overshoot is clamped to zero.
pub fn bicubic_upsample(d: &DepthMap, factor: usize) -> Result<DepthMap> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be >= 1".into()));
    }
    let (w, h) = d.dims();
    if w == 0 || h == 0 {
        return Ok(DepthMap::zeros(w * factor, h * factor));
    }
    let (ow, oh) = (w * factor, h * factor);
    let xt: Vec<Taps> = (0..ow).map(|x| taps(x, factor, w)).collect();
    let yt: Vec<Taps> = (0..oh).map(|y| taps(y, factor, h)).collect();
    let mut out = Vec::with_capacity(ow * oh);
    for ty in &yt {
        for tx in &xt {
            let mut acc = 0.0;
            let mut hole = false;
            'support: for j in 0..4 {
                if ty.weight[j] == 0.0 {
                    continue;
                }
                for i in 0..4 {
                    if tx.weight[i] == 0.0 {
                        continue;
                    }
                    let v = d.get(tx.index[i], ty.index[j]);
                    if v == 0.0 {
                        hole = true;
                        break 'support;
                    }
                    acc += ty.weight[j] * tx.weight[i] * v;
                }
            }
            out.push(if hole { 0.0 } else { acc.max(0.0) });
        }
    }
    Ok(DepthMap::from_raw(ow, oh, out))
}

/// Nearest-neighbor decimation: keeps pixel `(x * factor, y * factor)`.
pub fn downsample_nearest(d: &DepthMap, factor: usize) -> Result<DepthMap> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsampling factor must be >= 1".into()));
    }
    let (w, h) = (d.width() / factor, d.height() / factor);
    Ok(DepthMap::from_fn(w, h, |x, y| d.get(x * factor, y * factor)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let s: f64 = (-1..=2).map(|k| catmull_rom(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(2.0), 0.0);
    }

    #[test]
    fn constant_is_preserved() {
        let up = bicubic_upsample(&DepthMap::filled(5, 4, 1000.0), 2).unwrap();
        assert_eq!(up.dims(), (10, 8));
        assert!(up.data().iter().all(|v| (v - 1000.0).abs() < 1e-9));
    }

    #[test]
    fn factor_one_is_identity_even_with_holes() {
        let mut d = DepthMap::from_fn(4, 4, |x, y| 100.0 + (x * 7 + y * 3) as f64);
        d.set(2, 1, 0.0);
        assert_eq!(bicubic_upsample(&d, 1).unwrap(), d);
    }

    #[test]
    fn factor_zero_is_error() {
        assert!(bicubic_upsample(&DepthMap::filled(2, 2, 1.0), 0).is_err());
    }

    #[test]
    fn linear_ramp_interior_matches_closed_form() {
        let (slope, offset) = (37.5, 800.0);
        let d = DepthMap::from_fn(12, 6, |x, _| offset + slope * x as f64);
        let up = bicubic_upsample(&d, 2).unwrap();
        // Output column X samples source coordinate (X + 0.5) / 2 - 0.5.
        for y in 0..up.height() {
            for x in 4..up.width() - 4 {
                let src = (x as f64 + 0.5) / 2.0 - 0.5;
                let expect = offset + slope * src;
                assert!(((up.get(x, y) - expect) / expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn holes_propagate_to_support() {
        let mut d = DepthMap::filled(6, 6, 2000.0);
        d.set(3, 3, 0.0);
        let up = bicubic_upsample(&d, 2).unwrap();
        assert_eq!(up.get(6, 6), 0.0);
        assert_eq!(up.get(0, 0), 2000.0);
        assert!(up.count_holes() > 4);
    }

    #[test]
    fn downsample_picks_top_left() {
        let d = DepthMap::from_fn(4, 4, |x, y| (y * 4 + x) as f64);
        assert_eq!(downsample_nearest(&d, 2).unwrap().data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    proptest! {
        #[test]
        fn shift_equivariant_on_ramps(a in 0.0f64..50.0, b in 500.0f64..2000.0, c in 0.0f64..500.0) {
            let d1 = DepthMap::from_fn(8, 8, |x, y| b + a * (x + y) as f64);
            let d2 = DepthMap::from_fn(8, 8, |x, y| b + c + a * (x + y) as f64);
            let u1 = bicubic_upsample(&d1, 2).unwrap();
            let u2 = bicubic_upsample(&d2, 2).unwrap();
            for (p, q) in u1.data().iter().zip(u2.data()) {
                prop_assert!((q - p - c).abs() < 1e-8);
            }
        }
    }
}
