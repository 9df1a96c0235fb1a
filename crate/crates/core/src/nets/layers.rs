use serde::{Deserialize, Serialize};

use crate::autodiff::{Module, Parameter, Real, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Conv<T: Real> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: usize,
    pub spectral: bool,
}

impl<T: Real> Conv<T> {
    /// Zero-initialized; see [`super::xavier_init`].
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Self {
        Self {
            weight: Parameter::new(format!("{name}.weight"), Tensor::zeros([cout, cin, k, k])),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros([cout])),
            stride,
            padding,
            spectral: false,
        }
    }

    /// `k x k` convolution that keeps the resolution.
    pub fn same(name: &str, cin: usize, cout: usize, k: usize) -> Self {
        Self::new(name, cin, cout, k, 1, k / 2)
    }

    pub fn with_spectral(mut self) -> Self {
        self.spectral = true;
        self.weight.init_spectral(0);
        self
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut w = tape.param(&self.weight);
        if self.spectral {
            let state = self
                .weight
                .spectral_state()
                .ok_or_else(|| Error::Config(format!("{} has no spectral state", self.weight.name())))?;
            w = w.spectral_scale(state)?;
        }
        x.conv2d(w, Some(tape.param(&self.bias)), self.stride, self.padding)
    }

    /// One power-iteration step on the persistent vectors.
    pub fn update_spectral(&mut self, iterations: usize) -> Result<()> {
        if self.spectral {
            self.weight.power_iterate(iterations)?;
        }
        Ok(())
    }
}

impl<T: Real> Module<T> for Conv<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Group,
    Instance,
    None,
}

/// Feature normalization with a per-channel affine map.
#[derive(Debug, Clone)]
pub struct Norm<T: Real> {
    pub gain: Parameter<T>,
    pub shift: Parameter<T>,
    pub kind: NormKind,
    pub groups: usize,
}

impl<T: Real> Norm<T> {
    pub fn new(name: &str, channels: usize, kind: NormKind, groups: usize) -> Result<Self> {
        if kind == NormKind::Group && (groups == 0 || channels % groups != 0) {
            return Err(Error::Config(format!("{name}: {channels} channels into {groups} groups")));
        }
        Ok(Self {
            gain: Parameter::new(format!("{name}.gain"), Tensor::full([channels], T::one())),
            shift: Parameter::new(format!("{name}.shift"), Tensor::zeros([channels])),
            kind,
            groups,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let (g, s) = (tape.param(&self.gain), tape.param(&self.shift));
        match self.kind {
            NormKind::Group => x.group_norm(self.groups, g, s),
            NormKind::Instance => x.instance_norm(g, s),
            NormKind::None => Ok(x),
        }
    }
}

impl<T: Real> Module<T> for Norm<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        if self.kind != NormKind::None {
            f(&self.gain);
            f(&self.shift);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        if self.kind != NormKind::None {
            f(&mut self.gain);
            f(&mut self.shift);
        }
    }
}

/// Convolution, normalization, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T: Real> {
    pub conv: Conv<T>,
    pub norm: Norm<T>,
}

impl<T: Real> ConvBlock<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        kind: NormKind,
        groups: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv::new(&format!("{name}.conv"), cin, cout, k, stride, k / 2),
            norm: Norm::new(&format!("{name}.norm"), cout, kind, groups)?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.norm.forward(tape, self.conv.forward(tape, x)?)?.relu())
    }
}

impl<T: Real> Module<T> for ConvBlock<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.conv.visit_params(f);
        self.norm.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.conv.visit_params_mut(f);
        self.norm.visit_params_mut(f);
    }
}

/// `x + norm(conv(relu(norm(conv(x)))))`.
#[derive(Debug, Clone)]
pub struct ResBlock<T: Real> {
    pub first: ConvBlock<T>,
    pub conv: Conv<T>,
    pub norm: Norm<T>,
}

impl<T: Real> ResBlock<T> {
    pub fn new(name: &str, channels: usize, kind: NormKind, groups: usize) -> Result<Self> {
        Ok(Self {
            first: ConvBlock::new(&format!("{name}.0"), channels, channels, 3, 1, kind, groups)?,
            conv: Conv::same(&format!("{name}.1.conv"), channels, channels, 3),
            norm: Norm::new(&format!("{name}.1.norm"), channels, kind, groups)?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.first.forward(tape, x)?;
        let h = self.norm.forward(tape, self.conv.forward(tape, h)?)?;
        x.add(h)
    }
}

impl<T: Real> Module<T> for ResBlock<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.first.visit_params(f);
        self.conv.visit_params(f);
        self.norm.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.first.visit_params_mut(f);
        self.conv.visit_params_mut(f);
        self.norm.visit_params_mut(f);
    }
}

/// Plain U-Net: `depth` levels of two conv blocks, stride-2 convolutions
/// between levels, nearest upsampling with skip concatenation on the way
/// up, and a final 3x3 projection to `cout` channels (no activation).
#[derive(Debug, Clone)]
pub struct UNet<T: Real> {
    pub down: Vec<(ConvBlock<T>, ConvBlock<T>)>,
    pub up: Vec<(ConvBlock<T>, ConvBlock<T>)>,
    pub head: Conv<T>,
}

impl<T: Real> UNet<T> {
    pub fn new(name: &str, cin: usize, cout: usize, base: usize, depth: usize, kind: NormKind, groups: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config(format!("{name}: U-Net depth must be >= 1")));
        }
        let ch = |i: usize| base << i;
        let mut down = Vec::new();
        for i in 0..depth {
            let (inc, stride) = if i == 0 { (cin, 1) } else { (ch(i - 1), 2) };
            down.push((
                ConvBlock::new(&format!("{name}.down{i}.a"), inc, ch(i), 3, stride, kind, groups)?,
                ConvBlock::new(&format!("{name}.down{i}.b"), ch(i), ch(i), 3, 1, kind, groups)?,
            ));
        }
        let mut up = Vec::new();
        for i in (0..depth - 1).rev() {
            up.push((
                ConvBlock::new(&format!("{name}.up{i}.a"), ch(i + 1) + ch(i), ch(i), 3, 1, kind, groups)?,
                ConvBlock::new(&format!("{name}.up{i}.b"), ch(i), ch(i), 3, 1, kind, groups)?,
            ));
        }
        Ok(Self {
            down,
            up,
            head: Conv::same(&format!("{name}.head"), base, cout, 3),
        })
    }

    /// Spatial extents must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << (self.down.len() - 1)
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        let d = self.divisor();
        if shape.len() != 4 || shape[2] % d != 0 || shape[3] % d != 0 {
            return Err(Error::Dimension(format!("U-Net input {shape:?} not divisible by {d}")));
        }
        let mut skips = Vec::new();
        let mut h = x;
        for (a, b) in &self.down {
            h = b.forward(tape, a.forward(tape, h)?)?;
            skips.push(h);
        }
        skips.pop();
        for (a, b) in &self.up {
            let skip = skips.pop().expect("one skip per up level");
            let cat = Var::concat_channels(&[h.upsample2x()?, skip])?;
            h = b.forward(tape, a.forward(tape, cat)?)?;
        }
        self.head.forward(tape, h)
    }
}

impl<T: Real> Module<T> for UNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        for (a, b) in self.down.iter().chain(&self.up) {
            a.visit_params(f);
            b.visit_params(f);
        }
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        for (a, b) in self.down.iter_mut().chain(self.up.iter_mut()) {
            a.visit_params_mut(f);
            b.visit_params_mut(f);
        }
        self.head.visit_params_mut(f);
    }
}
