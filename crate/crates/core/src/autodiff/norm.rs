use super::tensor::dims4;
use super::{Real, Tensor, Var};
use crate::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;

impl<'t, T: Real> Var<'t, T> {
    /// Per-sample, per-group standardization followed by a per-channel affine
    /// map. `gain` and `shift` have shape `[C]`.
    pub fn group_norm(self, groups: usize, gain: Var<'t, T>, shift: Var<'t, T>) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = dims4(x.shape())?;
        if groups == 0 || c % groups != 0 {
            return Err(Error::shape("group_norm", format!("{c} channels into {groups} groups")));
        }
        let (gv, sv) = (gain.value(), shift.value());
        if gv.shape() != [c] || sv.shape() != [c] {
            return Err(Error::shape(
                "group_norm",
                format!("affine {:?}/{:?} for {c} channels", gv.shape(), sv.shape()),
            ));
        }
        let hw = h * w;
        let per = c / groups;
        let m = per * hw;
        let eps = T::of(NORM_EPS);
        let inv_m = T::one() / T::of(m as f64);

        let mut xhat = vec![T::zero(); x.numel()];
        let mut inv_std = vec![T::zero(); n * groups];
        for s in 0..n {
            for g in 0..groups {
                let range = (s * c + g * per) * hw..(s * c + (g + 1) * per) * hw;
                let xs = &x.data()[range.clone()];
                let mean = xs.iter().copied().sum::<T>() * inv_m;
                let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_m;
                let is = T::one() / (var + eps).sqrt();
                inv_std[s * groups + g] = is;
                for (o, &v) in xhat[range].iter_mut().zip(xs) {
                    *o = (v - mean) * is;
                }
            }
        }
        let mut out = vec![T::zero(); x.numel()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                let (a, b) = (gv.data()[ch], sv.data()[ch]);
                for i in base..base + hw {
                    out[i] = a * xhat[i] + b;
                }
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;

        let (rx, rg, rs) = (self.requires_grad(), gain.requires_grad(), shift.requires_grad());
        let (ix, ig, is) = (self.id, gain.id, shift.id);
        let shape = x.shape().to_vec();
        Ok(self.tape.push(out, rx || rg || rs, move |gout, sink| {
            let gd = gout.data();
            if rg || rs {
                let mut dg = vec![T::zero(); c];
                let mut ds = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * hw;
                        for i in base..base + hw {
                            dg[ch] += gd[i] * xhat[i];
                            ds[ch] += gd[i];
                        }
                    }
                }
                if rg {
                    sink.add(ig, Tensor::new([c], dg).expect("gain grad shape"));
                }
                if rs {
                    sink.add(is, Tensor::new([c], ds).expect("shift grad shape"));
                }
            }
            if !rx {
                return;
            }
            sink.with(ix, &shape, |gx| {
                let mut dxhat = vec![T::zero(); m];
                for s in 0..n {
                    for g in 0..groups {
                        let start = (s * c + g * per) * hw;
                        for (j, d) in dxhat.iter_mut().enumerate() {
                            *d = gd[start + j] * gv.data()[g * per + j / hw];
                        }
                        let xh = &xhat[start..start + m];
                        let mean_d = dxhat.iter().copied().sum::<T>() * inv_m;
                        let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() * inv_m;
                        let is = inv_std[s * groups + g];
                        for j in 0..m {
                            gx[start + j] += is * (dxhat[j] - mean_d - xh[j] * mean_dx);
                        }
                    }
                }
            });
        }))
    }

    /// Group normalization with one group per channel.
    pub fn instance_norm(self, gain: Var<'t, T>, shift: Var<'t, T>) -> Result<Var<'t, T>> {
        let c = dims4(&self.shape())?.1;
        self.group_norm(c, gain, shift)
    }
}
