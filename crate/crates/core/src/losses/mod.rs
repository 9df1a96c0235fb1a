//! Training objectives as differentiable tape operations. Depth tensors are
//! NCHW with one channel, normalized to `[0, 1]`, with 0 marking a hole.
//! Normals follow the metric convention: forward differences of the
//! normalized depth, valid where the pixel and its right and lower
//! neighbors are defined.

mod presets;
mod translation;

pub use presets::{DomainWeights, LossWeights, Term, WeightMask, PRESET_NAMES, WEIGHTS_SCHEMA};
pub use translation::{
    translation_discriminator_loss, translation_total_loss, TranslationBatch, TranslationOutputs, TranslationTerms,
};

use crate::autodiff::{Real, Tensor, Var};
use crate::{Error, Result};

/// Regularizer inside square roots.
pub const SQRT_EPS: f64 = 1e-12;

/// Rec.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Normal map of a depth tensor with its validity mask.
pub struct Normals<'t, T: Real> {
    /// `[N, 3, H - 1, W - 1]`.
    pub value: Var<'t, T>,
    /// `[N, 1, H - 1, W - 1]`, 1 where the normal is defined.
    pub valid: Tensor<T>,
}

fn dims(op: &'static str, t: &Tensor<impl Real>, channels: usize) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] if c == channels => Ok((n, h, w)),
        ref s => Err(Error::shape(op, format!("expected [N, {channels}, H, W], got {s:?}"))),
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Top-left `h x w` crop of every channel.
fn crop<T: Real>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let s = t.shape();
    let (nc, full_w) = (s[0] * s[1], s[3]);
    let plane = s[2] * full_w;
    let mut out = Vec::with_capacity(nc * h * w);
    for p in 0..nc {
        for y in 0..h {
            let row = p * plane + y * full_w;
            out.extend_from_slice(&t.data()[row..row + w]);
        }
    }
    Tensor::new(vec![s[0], s[1], h, w], out).expect("crop shape")
}

/// `[N, 1, H, W]` to `[N, c, H, W]`.
fn repeat_channels<T: Real>(t: &Tensor<T>, c: usize) -> Tensor<T> {
    let s = t.shape();
    let plane = s[2] * s[3];
    let mut out = Vec::with_capacity(t.numel() * c);
    for n in 0..s[0] {
        let src = &t.data()[n * plane..(n + 1) * plane];
        for _ in 0..c {
            out.extend_from_slice(src);
        }
    }
    Tensor::new(vec![s[0], c, s[2], s[3]], out).expect("repeat shape")
}

fn defined<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| if v > T::zero() { T::one() } else { T::zero() })
}

fn product<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn normal_validity<T: Real>(d: &Tensor<T>) -> Tensor<T> {
    let s = d.shape();
    let (n, h, w) = (s[0], s[2], s[3]);
    let z = T::zero();
    let mut out = Vec::with_capacity(n * (h - 1) * (w - 1));
    for b in 0..n {
        let p = &d.data()[b * h * w..(b + 1) * h * w];
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let i = y * w + x;
                let ok = p[i] > z && p[i + 1] > z && p[i + w] > z;
                out.push(if ok { T::one() } else { z });
            }
        }
    }
    Tensor::new(vec![n, 1, h - 1, w - 1], out).expect("validity shape")
}

/// Differentiable normals `(-zx, -zy, 1) / sqrt(zx² + zy² + 1)`.
pub fn surface_normals<'t, T: Real>(d: Var<'t, T>) -> Result<Normals<'t, T>> {
    let dv = d.value();
    let (_, h, w) = dims("surface_normals", &dv, 1)?;
    if h < 2 || w < 2 {
        return Err(Error::shape("surface_normals", format!("need at least 2x2, got {h}x{w}")));
    }
    let zx = d.diff_h()?.slice(2, 0, h - 1)?;
    let zy = d.diff_v()?.slice(3, 0, w - 1)?;
    let norm = zx.square().add(zy.square())?.add_scalar(1.0 + SQRT_EPS).sqrt();
    let inv = d.tape().constant(Tensor::full(norm.shape(), T::one())).div(norm)?;
    let value = Var::concat_channels(&[zx.neg().mul(inv)?, zy.neg().mul(inv)?, inv])?;
    Ok(Normals {
        value,
        valid: normal_validity(&dv),
    })
}

/// Mean of `|pred - target|` over pixels where `mask_source` is defined.
pub fn masked_l1<'t, T: Real>(pred: Var<'t, T>, target: Var<'t, T>, mask_source: &Tensor<T>) -> Result<Var<'t, T>> {
    same_shape("masked_l1", &pred.shape(), &target.shape())?;
    same_shape("masked_l1", &pred.shape(), mask_source.shape())?;
    let m = defined(mask_source);
    let count = m.data().iter().filter(|&&v| v > T::zero()).count();
    let sum = pred.sub(target)?.abs().mul_const(&m)?.sum();
    Ok(sum.scale(if count == 0 { 0.0 } else { 1.0 / count as f64 }))
}

/// Per-pixel weighted depth error: `λ1·mean(w1 |Δ|) + λ2·mean(w2 Δ²)` over
/// all pixels. Weights follow the holes of `input`; target holes get 0.
pub fn depth_loss<'t, T: Real>(
    pred: Var<'t, T>,
    target: Var<'t, T>,
    input: &Tensor<T>,
    t1: &Term,
    t2: &Term,
) -> Result<Var<'t, T>> {
    same_shape("depth_loss", &pred.shape(), &target.shape())?;
    let tv = target.value();
    let w1 = t1.mask.pixel_weights(input, &tv)?;
    let w2 = t2.mask.pixel_weights(input, &tv)?;
    let diff = pred.sub(target)?;
    let l1 = diff.abs().mul_const(&w1)?.mean().scale(t1.lambda);
    let l2 = diff.square().mul_const(&w2)?.mean().scale(t2.lambda);
    l1.add(l2)
}

/// `λ1·MAE_v + λ2·MSE_v` with per-pixel weights, averaged over the three
/// canonical light directions and all normal-grid pixels.
pub fn perceptual_surface_loss<'t, T: Real>(
    pred: Var<'t, T>,
    target: Var<'t, T>,
    input: &Tensor<T>,
    t1: &Term,
    t2: &Term,
) -> Result<Var<'t, T>> {
    same_shape("perceptual_surface_loss", &pred.shape(), &target.shape())?;
    same_shape("perceptual_surface_loss", &pred.shape(), input.shape())?;
    let (np, nt) = (surface_normals(pred)?, surface_normals(target)?);
    let s = input.shape();
    let joint = product(&np.valid, &nt.valid);
    let grid_input = crop(input, s[2] - 1, s[3] - 1);
    // validity already encodes target holes; the mask only sees the input
    let weights = |t: &Term| -> Result<Tensor<T>> {
        Ok(repeat_channels(&t.mask.pixel_weights(&grid_input, &joint)?, 3))
    };
    let (w1, w2) = (weights(t1)?, weights(t2)?);
    let diff = np.value.sub(nt.value)?;
    let mae = diff.abs().mul_const(&w1)?.mean().scale(t1.lambda);
    let mse = diff.square().mul_const(&w2)?.mean().scale(t2.lambda);
    mae.add(mse)
}

/// Rec.601 luminance of an `[N, 3, H, W]` image.
pub fn luminance<T: Real>(rgb: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w) = dims("luminance", rgb, 3)?;
    let plane = h * w;
    let mut out = Vec::with_capacity(n * plane);
    for b in 0..n {
        let px = &rgb.data()[b * 3 * plane..(b + 1) * 3 * plane];
        for i in 0..plane {
            out.push(T::of(
                LUMA[0] * px[i].f64() + LUMA[1] * px[plane + i].f64() + LUMA[2] * px[2 * plane + i].f64(),
            ));
        }
    }
    Tensor::new(vec![n, 1, h, w], out)
}

/// Edge-aware depth gradient penalty:
/// `mean(|∂h D|·exp(-|∂h I|)) + mean(|∂v D|·exp(-|∂v I|))` on luminance.
pub fn boundary_loss<'t, T: Real>(pred: Var<'t, T>, rgb: &Tensor<T>) -> Result<Var<'t, T>> {
    let gray = luminance(rgb)?;
    same_shape("boundary_loss", &pred.shape(), gray.shape())?;
    let tape = pred.tape();
    let g = tape.constant(gray);
    let edge = |gd: Var<'t, T>| gd.value().map(|v| (-v.abs()).exp());
    let wh = edge(g.diff_h()?);
    let wv = edge(g.diff_v()?);
    let th = pred.diff_h()?.abs().mul_const(&wh)?.mean();
    let tv = pred.diff_v()?.abs().mul_const(&wv)?.mean();
    th.add(tv)
}

/// Total variation of a normal map: `‖∂h N‖₂ + ‖∂v N‖₂`, each norm over
/// all pixels and channels.
pub fn smoothness_loss<'t, T: Real>(normals: Var<'t, T>) -> Result<Var<'t, T>> {
    let h = root_or_zero(normals.diff_h()?.square().sum());
    let v = root_or_zero(normals.diff_v()?.square().sum());
    h.add(v)
}

/// `sqrt(s)` with the zero subgradient at `s == 0`, where `s` itself is
/// returned so the value stays exactly 0.
fn root_or_zero<'t, T: Real>(s: Var<'t, T>) -> Var<'t, T> {
    if s.item() == 0.0 {
        s
    } else {
        s.sqrt()
    }
}

/// Mean squared normal difference over jointly valid normals, averaged over
/// the three light directions (uniform weights).
pub fn uniform_mse_v<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    let (na, nb) = (surface_normals(a)?, surface_normals(b)?);
    let joint = product(&na.valid, &nb.valid);
    let count = joint.data().iter().filter(|&&v| v > T::zero()).count();
    let sum = na.value.sub(nb.value)?.square().mul_const(&repeat_channels(&joint, 3))?.sum();
    Ok(sum.scale(if count == 0 { 0.0 } else { 1.0 / (3 * count) as f64 }))
}

/// `L1(dH, dH_rec) + MSE_v(dH, dH_rec)` over defined pixels of `d_h`.
pub fn cycle_loss<'t, T: Real>(d_h: Var<'t, T>, d_h_rec: Var<'t, T>) -> Result<Var<'t, T>> {
    let l1 = masked_l1(d_h_rec, d_h, &d_h.value())?;
    l1.add(uniform_mse_v(d_h, d_h_rec)?)
}

/// `λL·L1(dL_enh, dL) + λH·L1(dH_deg, dH)`, each over pixels where the real
/// input is defined. Pixels the generator turned into holes (below
/// [`crate::nets::HOLE_SNAP`]) are not altered values and are skipped.
pub fn range_loss<'t, T: Real>(
    d_l: Var<'t, T>,
    d_l_enh: Var<'t, T>,
    d_h: Var<'t, T>,
    d_h_deg: Var<'t, T>,
    lambda_l: f64,
    lambda_h: f64,
) -> Result<Var<'t, T>> {
    let keep = |real: &Tensor<T>, generated: &Tensor<T>| {
        product(&defined(real), &crate::nets::snap_holes(generated))
    };
    let ml = keep(&d_l.value(), &d_l_enh.value());
    let mh = keep(&d_h.value(), &d_h_deg.value());
    let low = masked_l1(d_l_enh, d_l, &ml)?.scale(lambda_l);
    let high = masked_l1(d_h_deg, d_h, &mh)?.scale(lambda_h);
    low.add(high)
}

/// `λ·L1(G_L2H(dH), dH)` over defined pixels of `d_h`.
pub fn identity_loss<'t, T: Real>(mapped: Var<'t, T>, d_h: Var<'t, T>, lambda: f64) -> Result<Var<'t, T>> {
    Ok(masked_l1(mapped, d_h, &d_h.value())?.scale(lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanSide {
    Discriminator,
    Generator,
}

/// Least-squares GAN objectives. The discriminator side is
/// `½·mean((real - 1)²) + ½·mean(fake²)` and needs `real`; the generator
/// side is `mean((fake - 1)²)`.
pub fn lsgan_loss<'t, T: Real>(real: Option<Var<'t, T>>, fake: Var<'t, T>, side: GanSide) -> Result<Var<'t, T>> {
    match side {
        GanSide::Generator => Ok(fake.add_scalar(-1.0).square().mean()),
        GanSide::Discriminator => {
            let real = real.ok_or_else(|| Error::InvalidArgument("discriminator loss needs real scores".into()))?;
            let r = real.add_scalar(-1.0).square().mean().scale(0.5);
            r.add(fake.square().mean().scale(0.5))
        }
    }
}

/// Pseudo-example loss `L^H`: depth, surface and smoothness terms, with the
/// weight mask taken from the degraded input.
pub fn enhancement_pseudo_loss<'t, T: Real>(
    pred: Var<'t, T>,
    d_h: Var<'t, T>,
    input: &Tensor<T>,
    w: &DomainWeights,
) -> Result<Var<'t, T>> {
    let depth = depth_loss(pred, d_h, input, &w.depth1, &w.depth2)?;
    let surf = perceptual_surface_loss(pred, d_h, input, &w.surf1, &w.surf2)?;
    let smooth = smoothness_loss(surface_normals(pred)?.value)?.scale(w.smooth);
    depth.add(surf)?.add(smooth)
}

/// Self-supervised loss `L^L` on real low-quality frames: depth, boundary
/// and smoothness terms, with the weight mask taken from the (augmented)
/// input.
pub fn enhancement_self_loss<'t, T: Real>(
    pred: Var<'t, T>,
    d_l: Var<'t, T>,
    input: &Tensor<T>,
    rgb: &Tensor<T>,
    w: &DomainWeights,
) -> Result<Var<'t, T>> {
    let depth = depth_loss(pred, d_l, input, &w.depth1, &w.depth2)?;
    let edge = boundary_loss(pred, rgb)?.scale(w.edge);
    let smooth = smoothness_loss(surface_normals(pred)?.value)?.scale(w.smooth);
    depth.add(edge)?.add(smooth)
}

#[cfg(test)]
mod tests;
