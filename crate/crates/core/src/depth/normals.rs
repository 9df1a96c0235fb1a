use super::{DepthMap, NormalMap, MAX_DEPTH_MM};
use crate::{Error, Result};

/// Surface normals of the height field `z = d / 5100` using forward
/// differences with the given pixel `step`.
///
/// A pixel is valid only when it and both difference neighbors
/// `(x + step, y)` and `(x, y + step)` exist and carry depth.
pub fn normals_from_depth(d: &DepthMap, step: usize) -> Result<NormalMap> {
    let (w, h) = d.dims();
    if w == 0 || h == 0 {
        return Err(Error::Empty("normals of a zero-sized depth map".into()));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("finite-difference step must be >= 1".into()));
    }
    let mut normals = vec![[0.0; 3]; w * h];
    let mut valid = vec![false; w * h];
    let scale = 1.0 / (step as f64 * MAX_DEPTH_MM);
    for y in 0..h.saturating_sub(step) {
        for x in 0..w.saturating_sub(step) {
            let z = d.get(x, y);
            let zr = d.get(x + step, y);
            let zd = d.get(x, y + step);
            if z == 0.0 || zr == 0.0 || zd == 0.0 {
                continue;
            }
            let zx = (zr - z) * scale;
            let zy = (zd - z) * scale;
            let inv = 1.0 / (zx * zx + zy * zy + 1.0).sqrt();
            let i = y * w + x;
            normals[i] = [-zx * inv, -zy * inv, inv];
            valid[i] = true;
        }
    }
    Ok(NormalMap {
        width: w,
        height: h,
        normals,
        valid,
    })
}
