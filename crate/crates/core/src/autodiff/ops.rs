//! Elementwise, reduction and structural ops with their reverse rules.

use super::tensor::dims4;
use super::{Real, Tensor, Var};
use crate::{Error, Result};

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Splits `shape` around `axis` into `(outer, dim, inner)`.
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t, T: Real> Var<'t, T> {
    /// Elementwise op `y = f(x)` with derivative `df(x, y)`.
    fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'t, T> {
        let x = self.value();
        let y = x.map(f);
        let req = self.requires_grad();
        let shape = y.shape().to_vec();
        let (xid, yv) = (self.id, std::sync::Arc::new(y.clone()));
        self.tape.push(y, req, move |g, sink| {
            sink.with(xid, &shape, |gx| {
                for (((gx, &g), &x), &y) in gx.iter_mut().zip(g.data()).zip(x.data()).zip(yv.data()) {
                    *gx += g * df(x, y);
                }
            });
        })
    }

    fn trace_sign(&self, kink: T) {
        let x = self.value();
        self.tape
            .trace_branches(|buf| buf.extend(x.data().iter().map(|&v| (v > kink) as u8)));
    }

    fn binary(
        self,
        op: &'static str,
        other: Var<'t, T>,
        f: impl Fn(T, T) -> T,
        da: impl Fn(T, T) -> T + 'static,
        db: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape(op, &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        let (ra, rb) = (self.requires_grad(), other.requires_grad());
        let (ia, ib) = (self.id, other.id);
        let shape = a.shape().to_vec();
        Ok(self.tape.push(out, ra || rb, move |g, sink| {
            if ra {
                sink.with(ia, &shape, |ga| {
                    for (((ga, &g), &x), &y) in ga.iter_mut().zip(g.data()).zip(a.data()).zip(b.data()) {
                        *ga += g * da(x, y);
                    }
                });
            }
            if rb {
                sink.with(ib, &shape, |gb| {
                    for (((gb, &g), &x), &y) in gb.iter_mut().zip(g.data()).zip(a.data()).zip(b.data()) {
                        *gb += g * db(x, y);
                    }
                });
            }
        }))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary("add", other, |a, b| a + b, |_, _| T::one(), |_, _| T::one())
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary("sub", other, |a, b| a - b, |_, _| T::one(), |_, _| -T::one())
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary("mul", other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary("div", other, |a, b| a / b, |_, b| T::one() / b, |a, b| -a / (b * b))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(self, mask: &Tensor<T>) -> Result<Var<'t, T>> {
        let m = self.tape.constant(mask.clone());
        self.mul(m)
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-1.0)
    }

    pub fn scale(self, c: f64) -> Var<'t, T> {
        let c = T::of(c);
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t, T> {
        let c = T::of(c);
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn abs(self) -> Var<'t, T> {
        self.trace_sign(T::zero());
        self.unary(
            |x| x.abs(),
            |x, _| if x > T::zero() { T::one() } else if x < T::zero() { -T::one() } else { T::zero() },
        )
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(self) -> Var<'t, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn square(self) -> Var<'t, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn sqrt(self) -> Var<'t, T> {
        self.unary(|x| x.sqrt(), |_, y| T::of(0.5) / y)
    }

    pub fn relu(self) -> Var<'t, T> {
        self.trace_sign(T::zero());
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t, T> {
        self.trace_sign(T::zero());
        let s = T::of(slope);
        self.unary(
            move |x| if x > T::zero() { x } else { x * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.unary(
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t, T> {
        let (lo, hi) = (T::of(lo), T::of(hi));
        let x = self.value();
        self.tape.trace_branches(|buf| {
            buf.extend(x.data().iter().map(|&v| (v < lo) as u8 + 2 * (v > hi) as u8))
        });
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    /// `ln(p / (1 - p))` of `p` clamped to `[eps, 1 - eps]`.
    pub fn logit(self, eps: f64) -> Var<'t, T> {
        let p = self.clamp(eps, 1.0 - eps);
        p.unary(
            |p| (p / (T::one() - p)).ln(),
            |p, _| T::one() / (p * (T::one() - p)),
        )
    }

    /// Product with a one-element variable (a learnable scalar gain).
    pub fn scale_by(self, s: Var<'t, T>) -> Result<Var<'t, T>> {
        let (x, sv) = (self.value(), s.value());
        if sv.numel() != 1 {
            return Err(Error::shape("scale_by", format!("scalar expected, got {:?}", sv.shape())));
        }
        let c = sv.item();
        let out = x.map(|v| v * c);
        let (rx, rs) = (self.requires_grad(), s.requires_grad());
        let (ix, is) = (self.id, s.id);
        let shape = x.shape().to_vec();
        let sshape = sv.shape().to_vec();
        Ok(self.tape.push(out, rx || rs, move |g, sink| {
            if rx {
                sink.with(ix, &shape, |gx| {
                    for (gx, &g) in gx.iter_mut().zip(g.data()) {
                        *gx += g * c;
                    }
                });
            }
            if rs {
                let d: T = g.data().iter().zip(x.data()).map(|(&g, &x)| g * x).sum();
                sink.with(is, &sshape, |gs| gs[0] += d);
            }
        }))
    }

    pub fn sum(self) -> Var<'t, T> {
        let x = self.value();
        let s: T = x.data().iter().copied().sum();
        let (id, shape) = (self.id, x.shape().to_vec());
        self.tape.push(Tensor::scalar(s), self.requires_grad(), move |g, sink| {
            let g = g.item();
            sink.with(id, &shape, |gx| gx.iter_mut().for_each(|v| *v += g));
        })
    }

    pub fn mean(self) -> Var<'t, T> {
        let n = self.value().numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat_channels(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let first = parts.first().ok_or_else(|| Error::Empty("concat of nothing".into()))?;
        let tape = first.tape;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let (n, _, h, w) = dims4(values[0].shape())?;
        let mut chans = Vec::with_capacity(parts.len());
        for v in &values {
            let (vn, vc, vh, vw) = dims4(v.shape())?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("{:?} vs {:?}", v.shape(), values[0].shape()),
                ));
            }
            chans.push(vc);
        }
        let total: usize = chans.iter().sum();
        let hw = h * w;
        let mut data = Vec::with_capacity(n * total * hw);
        for b in 0..n {
            for (v, &c) in values.iter().zip(&chans) {
                data.extend_from_slice(&v.data()[b * c * hw..(b + 1) * c * hw]);
            }
        }
        let out = Tensor::new([n, total, h, w], data)?;
        let meta: Vec<(usize, bool, usize)> =
            parts.iter().zip(&chans).map(|(p, &c)| (p.id, p.requires_grad(), c)).collect();
        let req = meta.iter().any(|m| m.1);
        Ok(tape.push(out, req, move |g, sink| {
            let mut offset = 0;
            for &(id, r, c) in &meta {
                if r {
                    sink.with(id, &[n, c, h, w], |gx| {
                        for b in 0..n {
                            let src = &g.data()[(b * total + offset) * hw..(b * total + offset + c) * hw];
                            for (d, &s) in gx[b * c * hw..(b + 1) * c * hw].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                }
                offset += c;
            }
        }))
    }

    /// Narrows `axis` to `[start, start + len)`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape("slice", format!("axis {axis} [{start}, +{len}) of {shape:?}")));
        }
        let (outer, dim, inner) = around(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let id = self.id;
        Ok(self.tape.push(Tensor::new(out_shape, data)?, self.requires_grad(), move |g, sink| {
            sink.with(id, &shape, |gx| {
                for o in 0..outer {
                    let base = (o * dim + start) * inner;
                    let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                    for (d, &s) in gx[base..base + len * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            });
        }))
    }

    /// Repeats a single-channel `[N, 1, H, W]` tensor `c` times.
    pub fn expand_channels(self, c: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, xc, h, w) = dims4(x.shape())?;
        if xc != 1 {
            return Err(Error::shape("expand_channels", format!("{:?}", x.shape())));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * c * hw);
        for b in 0..n {
            for _ in 0..c {
                data.extend_from_slice(&x.data()[b * hw..(b + 1) * hw]);
            }
        }
        let id = self.id;
        Ok(self.tape.push(Tensor::new([n, c, h, w], data)?, self.requires_grad(), move |g, sink| {
            sink.with(id, &[n, 1, h, w], |gx| {
                for b in 0..n {
                    for k in 0..c {
                        let src = &g.data()[(b * c + k) * hw..(b * c + k + 1) * hw];
                        for (d, &s) in gx[b * hw..(b + 1) * hw].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            });
        }))
    }

    /// Nearest-neighbor upsampling by two along both spatial axes.
    pub fn upsample2x(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = dims4(x.shape())?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut data = vec![T::zero(); n * c * oh * ow];
        for p in 0..n * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut data[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    dst[y * ow + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        let id = self.id;
        Ok(self.tape.push(Tensor::new([n, c, oh, ow], data)?, self.requires_grad(), move |g, sink| {
            sink.with(id, &[n, c, h, w], |gx| {
                for p in 0..n * c {
                    let src = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for y in 0..oh {
                        for xx in 0..ow {
                            dst[(y / 2) * w + xx / 2] += src[y * ow + xx];
                        }
                    }
                }
            });
        }))
    }

    /// Nearest-neighbor decimation by two (keeps even rows and columns).
    pub fn downsample2x(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = dims4(x.shape())?;
        let (oh, ow) = (h / 2, w / 2);
        let mut data = Vec::with_capacity(n * c * oh * ow);
        for p in 0..n * c {
            for y in 0..oh {
                for xx in 0..ow {
                    data.push(x.data()[p * h * w + 2 * y * w + 2 * xx]);
                }
            }
        }
        let id = self.id;
        Ok(self.tape.push(Tensor::new([n, c, oh, ow], data)?, self.requires_grad(), move |g, sink| {
            sink.with(id, &[n, c, h, w], |gx| {
                for p in 0..n * c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            gx[p * h * w + 2 * y * w + 2 * xx] += g.data()[(p * oh + y) * ow + xx];
                        }
                    }
                }
            });
        }))
    }

    /// Forward difference along the last axis: `x[.., i + 1] - x[.., i]`.
    pub fn diff_h(self) -> Result<Var<'t, T>> {
        let axis = self.value().shape().len().checked_sub(1).ok_or_else(|| Error::shape("diff_h", "rank 0"))?;
        self.forward_diff(axis)
    }

    /// Forward difference along the second-to-last axis.
    pub fn diff_v(self) -> Result<Var<'t, T>> {
        let axis = self.value().shape().len().checked_sub(2).ok_or_else(|| Error::shape("diff_v", "rank < 2"))?;
        self.forward_diff(axis)
    }

    fn forward_diff(self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let (outer, dim, inner) = around(&shape, axis);
        if dim < 2 {
            return Err(Error::shape("forward_diff", format!("axis {axis} of {shape:?} too short")));
        }
        let mut data = Vec::with_capacity(outer * (dim - 1) * inner);
        for o in 0..outer {
            for i in 0..dim - 1 {
                let a = (o * dim + i) * inner;
                let b = a + inner;
                for k in 0..inner {
                    data.push(x.data()[b + k] - x.data()[a + k]);
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = dim - 1;
        let id = self.id;
        Ok(self.tape.push(Tensor::new(out_shape, data)?, self.requires_grad(), move |g, sink| {
            sink.with(id, &shape, |gx| {
                for o in 0..outer {
                    for i in 0..dim - 1 {
                        let a = (o * dim + i) * inner;
                        let src = (o * (dim - 1) + i) * inner;
                        for k in 0..inner {
                            let gv = g.data()[src + k];
                            gx[a + k] -= gv;
                            gx[a + inner + k] += gv;
                        }
                    }
                }
            });
        }))
    }
}
