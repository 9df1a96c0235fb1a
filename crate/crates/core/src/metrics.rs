//! Evaluation metrics: masked RMSE/MAE with hole/defined partitions,
//! normal-based surface metrics, and windowed SSIM.

use serde::{Deserialize, Serialize};

use crate::depth::{normals_from_depth, DepthMap, MAX_DEPTH_MM};
use crate::{Error, Result};

/// Errors of a prediction against ground truth.
///
/// `_h` fields cover pixels that are holes in the low-quality input, `_d`
/// fields pixels where it is defined. Depth errors are in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: f64,
    pub rmse_h: f64,
    pub rmse_d: f64,
    pub mae: f64,
    pub mae_h: f64,
    pub mae_d: f64,
    pub mse_v: f64,
    pub mae_v: f64,
    pub n_total: usize,
    pub n_h: usize,
    pub n_d: usize,
    /// Pixels with valid normals in both maps.
    pub n_v: usize,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "rmse,rmse_h,rmse_d,mae,mae_h,mae_d,mse_v";

    pub fn csv_row(&self) -> String {
        [self.rmse, self.rmse_h, self.rmse_d, self.mae, self.mae_h, self.mae_d, self.mse_v]
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Pixel-weighted average of several reports (normal metrics weighted
    /// by their own counts).
    pub fn pooled(reports: &[ErrorReport]) -> Result<ErrorReport> {
        if reports.is_empty() {
            return Err(Error::Empty("no reports to pool".into()));
        }
        let mut n = [0usize; 4];
        let mut sums = [0f64; 8];
        for r in reports {
            let counts = [r.n_total, r.n_h, r.n_d, r.n_v];
            for (a, b) in n.iter_mut().zip(counts) {
                *a += b;
            }
            let (t, h, d, v) = (r.n_total as f64, r.n_h as f64, r.n_d as f64, r.n_v as f64);
            sums[0] += r.rmse * r.rmse * t;
            sums[1] += r.rmse_h * r.rmse_h * h;
            sums[2] += r.rmse_d * r.rmse_d * d;
            sums[3] += r.mae * t;
            sums[4] += r.mae_h * h;
            sums[5] += r.mae_d * d;
            sums[6] += r.mse_v * v;
            sums[7] += r.mae_v * v;
        }
        let div = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
        Ok(ErrorReport {
            rmse: div(sums[0], n[0]).sqrt(),
            rmse_h: div(sums[1], n[1]).sqrt(),
            rmse_d: div(sums[2], n[2]).sqrt(),
            mae: div(sums[3], n[0]),
            mae_h: div(sums[4], n[1]),
            mae_d: div(sums[5], n[2]),
            mse_v: div(sums[6], n[3]),
            mae_v: div(sums[7], n[3]),
            n_total: n[0],
            n_h: n[1],
            n_d: n[2],
            n_v: n[3],
        })
    }
}

fn check_dims(op: &str, maps: &[&DepthMap]) -> Result<()> {
    let d = maps[0].dims();
    if let Some(m) = maps.iter().find(|m| m.dims() != d) {
        return Err(Error::Dimension(format!("{op}: {:?} vs {:?}", m.dims(), d)));
    }
    Ok(())
}

/// RMSE/MAE over pixels with defined ground truth, split by whether the
/// low-quality input was defined there. Surface metrics are included; they
/// are 0 with `n_v = 0` when no pixel has valid normals in both maps.
pub fn masked_error_stats(pred: &DepthMap, gt: &DepthMap, input_lq: &DepthMap) -> Result<ErrorReport> {
    check_dims("masked_error_stats", &[pred, gt, input_lq])?;
    let (mut se, mut se_h, mut se_d) = (0.0, 0.0, 0.0);
    let (mut ae, mut ae_h, mut ae_d) = (0.0, 0.0, 0.0);
    let (mut n_h, mut n_d) = (0usize, 0usize);
    for ((&p, &g), &l) in pred.data().iter().zip(gt.data()).zip(input_lq.data()) {
        if g <= 0.0 {
            continue;
        }
        let e = p - g;
        if l > 0.0 {
            se_d += e * e;
            ae_d += e.abs();
            n_d += 1;
        } else {
            se_h += e * e;
            ae_h += e.abs();
            n_h += 1;
        }
    }
    let n_total = n_h + n_d;
    if n_total == 0 {
        return Err(Error::Empty("ground truth has no defined pixels".into()));
    }
    se += se_h + se_d;
    ae += ae_h + ae_d;
    let div = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let (mse_v, mae_v, n_v) = match surface_errors(pred, gt)? {
        Some((s2, s1, n)) => (s2, s1, n),
        None => (0.0, 0.0, 0),
    };
    Ok(ErrorReport {
        rmse: div(se, n_total).sqrt(),
        rmse_h: div(se_h, n_h).sqrt(),
        rmse_d: div(se_d, n_d).sqrt(),
        mae: div(ae, n_total),
        mae_h: div(ae_h, n_h),
        mae_d: div(ae_d, n_d),
        mse_v,
        mae_v,
        n_total,
        n_h,
        n_d,
        n_v,
    })
}

/// `(MSE_v, MAE_v, jointly valid pixels)`, or `None` without valid pixels.
fn surface_errors(a: &DepthMap, b: &DepthMap) -> Result<Option<(f64, f64, usize)>> {
    let (na, nb) = (normals_from_depth(a, 1)?, normals_from_depth(b, 1)?);
    let (mut s2, mut s1, mut n) = (0.0, 0.0, 0usize);
    for i in 0..a.len() {
        if !(na.valid()[i] && nb.valid()[i]) {
            continue;
        }
        let (u, v) = (na.normals()[i], nb.normals()[i]);
        for k in 0..3 {
            let d = u[k] - v[k];
            s2 += d * d;
            s1 += d.abs();
        }
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    let denom = 3.0 * n as f64;
    Ok(Some((s2 / denom, s1 / denom, n)))
}

/// MSE_v of `pred` and of `baseline` against `gt`, both restricted to pixels
/// where all three maps have valid normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedSurface {
    pub pred: f64,
    pub baseline: f64,
    pub n: usize,
}

impl PairedSurface {
    pub fn pooled(items: &[PairedSurface]) -> PairedSurface {
        let n: usize = items.iter().map(|p| p.n).sum();
        let w = |f: fn(&PairedSurface) -> f64| {
            if n == 0 {
                0.0
            } else {
                items.iter().map(|p| f(p) * p.n as f64).sum::<f64>() / n as f64
            }
        };
        PairedSurface {
            pred: w(|p| p.pred),
            baseline: w(|p| p.baseline),
            n,
        }
    }

    /// Relative MSE_v reduction of `pred` over `baseline`.
    pub fn reduction(&self) -> f64 {
        if self.baseline == 0.0 {
            0.0
        } else {
            1.0 - self.pred / self.baseline
        }
    }
}

pub fn paired_surface_error(pred: &DepthMap, baseline: &DepthMap, gt: &DepthMap) -> Result<PairedSurface> {
    check_dims("paired_surface_error", &[pred, baseline, gt])?;
    let (np, nb, ng) = (
        normals_from_depth(pred, 1)?,
        normals_from_depth(baseline, 1)?,
        normals_from_depth(gt, 1)?,
    );
    let (mut sp, mut sb, mut n) = (0.0, 0.0, 0usize);
    for i in 0..gt.len() {
        if !(np.valid()[i] && nb.valid()[i] && ng.valid()[i]) {
            continue;
        }
        let g = ng.normals()[i];
        for k in 0..3 {
            sp += (np.normals()[i][k] - g[k]).powi(2);
            sb += (nb.normals()[i][k] - g[k]).powi(2);
        }
        n += 1;
    }
    let d = if n == 0 { 1.0 } else { 3.0 * n as f64 };
    Ok(PairedSurface {
        pred: sp / d,
        baseline: sb / d,
        n,
    })
}

/// Mean `|·|^p` of normal differences projected on the three canonical light
/// directions, averaged over directions. `p = 2` is MSE_v, `p = 1` is MAE_v.
pub fn perceptual_metric(pred: &DepthMap, gt: &DepthMap, p: u32) -> Result<f64> {
    check_dims("perceptual_metric", &[pred, gt])?;
    let (mse, mae, _) = surface_errors(pred, gt)?
        .ok_or_else(|| Error::Empty("no pixel has valid normals in both maps".into()))?;
    match p {
        1 => Ok(mae),
        2 => Ok(mse),
        _ => Err(Error::InvalidArgument(format!("p must be 1 or 2, got {p}"))),
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering over fully contained windows only.
fn filter_valid(src: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (width - SSIM_WINDOW + 1, height - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; ow * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, a)| a * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (σ = 1.5), dynamic range
/// [`MAX_DEPTH_MM`].
pub fn ssim(a: &DepthMap, b: &DepthMap) -> Result<f64> {
    check_dims("ssim", &[a, b])?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * MAX_DEPTH_MM).powi(2);
    let c2 = (SSIM_K2 * MAX_DEPTH_MM).powi(2);
    let (x, y) = (a.data(), b.data());
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<_>>();
    let mx = filter_valid(x, w, h, &k);
    let my = filter_valid(y, w, h, &k);
    let mxx = filter_valid(&prod(&|i| x[i] * x[i]), w, h, &k);
    let myy = filter_valid(&prod(&|i| y[i] * y[i]), w, h, &k);
    let mxy = filter_valid(&prod(&|i| x[i] * y[i]), w, h, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}
