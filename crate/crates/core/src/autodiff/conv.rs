use rayon::prelude::*;

use super::real::{matmul, Layout};
use super::tensor::dims4;
use super::{Real, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn cols(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut cols[((ci * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { T::zero() };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &cols[((ci * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in row[oy * g.ow..(oy + 1) * g.ow].iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// 2-D cross-correlation with zero padding.
    ///
    /// `self`: `[N, C, H, W]`, `weight`: `[O, C, k, k]`, `bias`: `[O]`.
    pub fn conv2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let wt = weight.value();
        let (n, c, h, w) = dims4(x.shape())?;
        let (o, wc, kh, kw) = dims4(wt.shape())?;
        if wc != c || kh != kw || kh == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} with weight {:?}", x.shape(), wt.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be >= 1"));
        }
        let b = bias.map(|b| b.value());
        if let Some(b) = &b {
            if b.shape() != [o] {
                return Err(Error::shape("conv2d", format!("bias {:?} for {o} outputs", b.shape())));
            }
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape("conv2d", format!("kernel {kh} larger than padded input {h}x{w}")));
        }
        let geo = Geometry {
            c,
            h,
            w,
            k: kh,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        };
        let (kk, p) = (geo.cols(), geo.positions());
        let mut out = vec![T::zero(); n * o * p];
        out.par_chunks_mut(o * p).enumerate().for_each(|(i, dst)| {
            let mut cols = vec![T::zero(); kk * p];
            im2col(&x.data()[i * c * h * w..(i + 1) * c * h * w], &geo, &mut cols);
            if let Some(b) = &b {
                for (oc, row) in dst.chunks_mut(p).enumerate() {
                    row.iter_mut().for_each(|v| *v = b.data()[oc]);
                }
            }
            matmul(o, kk, p, wt.data(), Layout::Normal, &cols, Layout::Normal, dst, T::one(), T::one());
        });
        let out = Tensor::new([n, o, geo.oh, geo.ow], out)?;

        let (rx, rw) = (self.requires_grad(), weight.requires_grad());
        let rb = bias.is_some_and(|b| b.requires_grad());
        let (ix, iw, ib) = (self.id, weight.id, bias.map(|b| b.id));
        let req = rx || rw || rb;
        Ok(self.tape.push(out, req, move |g, sink| {
            let gd = g.data();
            if rb {
                sink.with(ib.unwrap(), &[o], |gb| {
                    for i in 0..n {
                        for (oc, gbv) in gb.iter_mut().enumerate() {
                            *gbv += gd[(i * o + oc) * p..(i * o + oc + 1) * p].iter().copied().sum::<T>();
                        }
                    }
                });
            }
            if !(rx || rw) {
                return;
            }
            // Per-sample weight gradients are reduced in batch order so the
            // result does not depend on thread scheduling.
            let per_sample: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let gi = &gd[i * o * p..(i + 1) * o * p];
                    let dw = rw.then(|| {
                        let mut cols = vec![T::zero(); kk * p];
                        im2col(&x.data()[i * c * h * w..(i + 1) * c * h * w], &geo, &mut cols);
                        let mut dw = vec![T::zero(); o * kk];
                        matmul(o, p, kk, gi, Layout::Normal, &cols, Layout::Transposed, &mut dw, T::one(), T::zero());
                        dw
                    });
                    let dx = rx.then(|| {
                        let mut dcols = vec![T::zero(); kk * p];
                        matmul(kk, o, p, wt.data(), Layout::Transposed, gi, Layout::Normal, &mut dcols, T::one(), T::zero());
                        let mut dx = vec![T::zero(); c * h * w];
                        col2im(&dcols, &geo, &mut dx);
                        dx
                    });
                    (dw, dx)
                })
                .collect();
            if rw {
                sink.with(iw, &[o, c, kh, kw], |gw| {
                    for (dw, _) in &per_sample {
                        for (a, &b) in gw.iter_mut().zip(dw.as_ref().unwrap()) {
                            *a += b;
                        }
                    }
                });
            }
            if rx {
                sink.with(ix, &[n, c, h, w], |gx| {
                    for (i, (_, dx)) in per_sample.iter().enumerate() {
                        for (a, &b) in gx[i * c * h * w..(i + 1) * c * h * w].iter_mut().zip(dx.as_ref().unwrap()) {
                            *a += b;
                        }
                    }
                });
            }
        }))
    }
}
