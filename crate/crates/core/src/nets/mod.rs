//! Network definitions: the depth-translation generators and patch
//! discriminators, the domain-adaptive guidance network, and the
//! enhancement network.
//!
//! Constructors allocate zeroed parameters with hierarchical names; call
//! [`xavier_init`] before use. All networks work on NCHW tensors with depth
//! normalized to `[0, 1]`, where 0 marks a hole.

mod layers;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layers::{Conv, ConvBlock, Norm, NormKind, ResBlock, UNet};

use crate::autodiff::{Module, Parameter, Real, Tape, Tensor, Var};
use crate::datagen::{derive_seed, Quality};
use crate::{Error, Result};

/// Xavier-uniform weights, zero biases and shifts, and unit gains.
/// Parameters of layers named `residual` start at zero. Spectral vectors
/// are redrawn from `seed`.
pub fn xavier_init<T: Real>(net: &mut dyn Module<T>, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = 0u64;
    let mut err = None;
    net.visit_params_mut(&mut |p| {
        idx += 1;
        let name = p.name().to_owned();
        let shape = p.shape().to_vec();
        if name.contains(".residual.") {
            p.value_mut().data_mut().fill(T::zero());
        } else if name.ends_with(".weight") && shape.len() >= 2 {
            let receptive: usize = shape[2..].iter().product();
            let bound = (6.0 / ((shape[0] + shape[1]) * receptive) as f64).sqrt();
            p.value_mut()
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = T::of(rng.random_range(-bound..=bound)));
            if p.spectral_state().is_some() {
                p.init_spectral(derive_seed(seed, &[idx]));
            }
        } else if name.ends_with(".gain") {
            p.value_mut().data_mut().fill(T::one());
        } else if name.ends_with(".bias") || name.ends_with(".shift") {
            p.value_mut().data_mut().fill(T::zero());
        } else if err.is_none() {
            err = Some(Error::Config(format!("no initializer for parameter {name} {shape:?}")));
        }
    });
    err.map_or(Ok(()), Err)
}

/// Checks an NCHW input with `c` channels whose extents divide `divisor`.
fn expect_nchw<T: Real>(op: &'static str, v: &Var<'_, T>, c: usize, divisor: usize) -> Result<(usize, usize, usize)> {
    let s = v.shape();
    if s.len() != 4 || s[1] != c || s[2] == 0 || s[3] == 0 || s[2] % divisor != 0 || s[3] % divisor != 0 {
        return Err(Error::shape(
            op,
            format!("expected [N, {c}, H, W] with H, W divisible by {divisor}, got {s:?}"),
        ));
    }
    Ok((s[0], s[2], s[3]))
}

fn same_batch(op: &'static str, a: (usize, usize, usize), b: (usize, usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("inputs disagree on (N, H, W): {a:?} vs {b:?}")));
    }
    Ok(())
}

macro_rules! visit_all {
    ($self:ident, $f:ident, $method:ident, $iter:ident, [$($field:ident),*], [$($list:ident),*]) => {{
        $( $self.$field.$method($f); )*
        $( for m in $self.$list.$iter() { m.$method($f); } )*
    }};
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Channels after the two encoders are concatenated.
    pub width: usize,
    pub res_blocks: usize,
    pub groups: usize,
    /// Clamp used when mapping the input depth to logit space.
    pub logit_eps: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            width: 16,
            res_blocks: 3,
            groups: 4,
            logit_eps: 1e-3,
        }
    }
}

/// Depth translation generator conditioned on RGB.
///
/// Separate RGB and depth encoders (conv, stride-2 conv) are concatenated,
/// passed through ResNet blocks and decoded back to full resolution. The
/// decoder output is a residual in logit space from a zero-initialized
/// head, so a freshly initialized generator reproduces its input depth
/// (clamped to `[eps, 1 - eps]`).
#[derive(Debug, Clone)]
pub struct GeneratorNet<T: Real> {
    pub config: GeneratorConfig,
    enc_rgb: Vec<ConvBlock<T>>,
    enc_depth: Vec<ConvBlock<T>>,
    blocks: Vec<ResBlock<T>>,
    dec: ConvBlock<T>,
    head: Conv<T>,
}

impl<T: Real> GeneratorNet<T> {
    pub fn new(name: &str, config: GeneratorConfig) -> Result<Self> {
        let (w, g) = (config.width, config.groups);
        if w < 2 || w % 2 != 0 {
            return Err(Error::Config(format!("generator width {w} must be even")));
        }
        let half = w / 2;
        let kind = NormKind::Group;
        let enc = |branch: &str, cin: usize| -> Result<Vec<ConvBlock<T>>> {
            Ok(vec![
                ConvBlock::new(&format!("{name}.{branch}.0"), cin, half, 3, 1, kind, g.min(half))?,
                ConvBlock::new(&format!("{name}.{branch}.1"), half, half, 3, 2, kind, g.min(half))?,
            ])
        };
        Ok(Self {
            config,
            enc_rgb: enc("enc_rgb", 3)?,
            enc_depth: enc("enc_depth", 1)?,
            blocks: (0..config.res_blocks)
                .map(|i| ResBlock::new(&format!("{name}.res{i}"), w, kind, g))
                .collect::<Result<_>>()?,
            dec: ConvBlock::new(&format!("{name}.dec"), w, half, 3, 1, kind, g.min(half))?,
            head: Conv::same(&format!("{name}.residual"), half, 1, 3),
        })
    }

    /// `rgb: [N, 3, H, W]`, `depth: [N, 1, H, W]` with even `H, W`; returns
    /// `[N, 1, H, W]` in `(0, 1)`.
    pub fn forward<'t>(&self, tape: &'t Tape<T>, rgb: Var<'t, T>, depth: Var<'t, T>) -> Result<Var<'t, T>> {
        let a = expect_nchw("generator rgb", &rgb, 3, 2)?;
        let b = expect_nchw("generator depth", &depth, 1, 2)?;
        same_batch("generator", a, b)?;
        let mut fr = rgb;
        for l in &self.enc_rgb {
            fr = l.forward(tape, fr)?;
        }
        let mut fd = depth;
        for l in &self.enc_depth {
            fd = l.forward(tape, fd)?;
        }
        let mut h = Var::concat_channels(&[fr, fd])?;
        for blk in &self.blocks {
            h = blk.forward(tape, h)?;
        }
        let r = self.head.forward(tape, self.dec.forward(tape, h.upsample2x()?)?)?;
        Ok(depth.logit(self.config.logit_eps).add(r)?.sigmoid())
    }
}

impl<T: Real> Module<T> for GeneratorNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [dec, head], [enc_rgb, enc_depth, blocks]);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [dec, head], [enc_rgb, enc_depth, blocks]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub width: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            width: 16,
            leaky_slope: 0.2,
        }
    }
}

/// Patch discriminator with spectral normalization on every weight: two
/// stride-2 4x4 convolutions with leaky ReLU, then a 3x3 projection to a
/// score map at a quarter of the input resolution.
#[derive(Debug, Clone)]
pub struct DiscriminatorNet<T: Real> {
    pub config: DiscriminatorConfig,
    convs: Vec<Conv<T>>,
}

impl<T: Real> DiscriminatorNet<T> {
    pub fn new(name: &str, config: DiscriminatorConfig) -> Result<Self> {
        let (c, w) = (config.in_channels, config.width);
        if c == 0 || w == 0 {
            return Err(Error::Config("discriminator needs nonzero channels".into()));
        }
        Ok(Self {
            config,
            convs: vec![
                Conv::new(&format!("{name}.0"), c, w, 4, 2, 1).with_spectral(),
                Conv::new(&format!("{name}.1"), w, 2 * w, 4, 2, 1).with_spectral(),
                Conv::same(&format!("{name}.2"), 2 * w, 1, 3).with_spectral(),
            ],
        })
    }

    /// Advances the power iteration of every weight; call once per update.
    pub fn update_spectral(&mut self, iterations: usize) -> Result<()> {
        self.convs.iter_mut().try_for_each(|c| c.update_spectral(iterations))
    }

    /// `[N, C, H, W]` with `H, W >= 4` to `[N, 1, ceil(H/4), ceil(W/4)]`
    /// (exactly a quarter for multiples of 4).
    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        expect_nchw("discriminator", &x, self.config.in_channels, 1)?;
        let s = x.shape();
        if s[2] < 4 || s[3] < 4 {
            return Err(Error::shape("discriminator", format!("input {s:?} smaller than 4x4")));
        }
        let s = self.config.leaky_slope;
        let h = self.convs[0].forward(tape, x)?.leaky_relu(s);
        let h = self.convs[1].forward(tape, h)?.leaky_relu(s);
        self.convs[2].forward(tape, h)
    }
}

impl<T: Real> Module<T> for DiscriminatorNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [], [convs]);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [], [convs]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Stem width of each domain encoder; doubled at each downsampling.
    pub width: usize,
    pub res_blocks: usize,
    pub unet_base: usize,
    pub unet_depth: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            width: 8,
            res_blocks: 2,
            unet_base: 16,
            unet_depth: 3,
        }
    }
}

#[derive(Debug, Clone)]
struct DomainEncoder<T: Real> {
    down: Vec<ConvBlock<T>>,
    blocks: Vec<ResBlock<T>>,
    up: Vec<ConvBlock<T>>,
}

impl<T: Real> DomainEncoder<T> {
    fn new(name: &str, c: &GuidanceConfig) -> Result<Self> {
        let w = c.width;
        let k = NormKind::Instance;
        Ok(Self {
            down: vec![
                ConvBlock::new(&format!("{name}.stem"), 3, w, 3, 1, k, 1)?,
                ConvBlock::new(&format!("{name}.down0"), w, 2 * w, 3, 2, k, 1)?,
                ConvBlock::new(&format!("{name}.down1"), 2 * w, 4 * w, 3, 2, k, 1)?,
            ],
            blocks: (0..c.res_blocks)
                .map(|i| ResBlock::new(&format!("{name}.res{i}"), 4 * w, k, 1))
                .collect::<Result<_>>()?,
            up: vec![
                ConvBlock::new(&format!("{name}.up0"), 4 * w, 2 * w, 3, 1, k, 1)?,
                ConvBlock::new(&format!("{name}.up1"), 2 * w, w, 3, 1, k, 1)?,
            ],
        })
    }

    fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x;
        for l in &self.down {
            h = l.forward(tape, h)?;
        }
        for b in &self.blocks {
            h = b.forward(tape, h)?;
        }
        for l in &self.up {
            h = l.forward(tape, h.upsample2x()?)?;
        }
        Ok(h)
    }
}

impl<T: Real> Module<T> for DomainEncoder<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [], [down, blocks, up]);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [], [down, blocks, up]);
    }
}

/// RGB-to-depth estimator with one encoder per domain and a shared U-Net
/// decoder; output in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct GuidanceNet<T: Real> {
    pub config: GuidanceConfig,
    enc_low: DomainEncoder<T>,
    enc_high: DomainEncoder<T>,
    decoder: UNet<T>,
}

impl<T: Real> GuidanceNet<T> {
    pub fn new(name: &str, config: GuidanceConfig) -> Result<Self> {
        Ok(Self {
            config,
            enc_low: DomainEncoder::new(&format!("{name}.enc_low"), &config)?,
            enc_high: DomainEncoder::new(&format!("{name}.enc_high"), &config)?,
            decoder: UNet::new(
                &format!("{name}.dec"),
                config.width,
                1,
                config.unet_base,
                config.unet_depth,
                NormKind::Instance,
                1,
            )?,
        })
    }

    pub fn divisor(&self) -> usize {
        self.decoder.divisor().max(4)
    }

    /// `rgb: [N, 3, H, W]` to `[N, 1, H, W]` using the encoder of `domain`.
    pub fn forward<'t>(&self, tape: &'t Tape<T>, rgb: Var<'t, T>, domain: Quality) -> Result<Var<'t, T>> {
        expect_nchw("guidance rgb", &rgb, 3, self.divisor())?;
        let enc = match domain {
            Quality::Low => &self.enc_low,
            Quality::High => &self.enc_high,
        };
        Ok(self.decoder.forward(tape, enc.forward(tape, rgb)?)?.sigmoid())
    }
}

impl<T: Real> Module<T> for GuidanceNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [enc_low, enc_high, decoder], []);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [enc_low, enc_high, decoder], []);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementConfig {
    /// Channels of each input feature extractor.
    pub feature_width: usize,
    pub unet_base: usize,
    pub unet_depth: usize,
    pub norm: NormKind,
    pub groups: usize,
    /// Predict a logit-space correction of the hole-filled input instead of
    /// the depth itself.
    pub residual: bool,
    pub logit_eps: f64,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            feature_width: 8,
            unet_base: 16,
            unet_depth: 3,
            norm: NormKind::Group,
            groups: 4,
            residual: true,
            logit_eps: 1e-3,
        }
    }
}

/// Depth enhancement network. RGB and depth each pass through a two-layer
/// feature extractor; the features, the raw inputs, the guidance estimate
/// and the validity mask are concatenated and fed to a U-Net.
///
/// In residual mode the U-Net output corrects, in logit space, a base map
/// that takes the input depth where it is defined and the guidance
/// estimate in holes.
#[derive(Debug, Clone)]
pub struct EnhancementNet<T: Real> {
    pub config: EnhancementConfig,
    feat_rgb: Vec<Conv<T>>,
    feat_depth: Vec<Conv<T>>,
    unet: UNet<T>,
}

impl<T: Real> EnhancementNet<T> {
    pub fn new(name: &str, config: EnhancementConfig) -> Result<Self> {
        let fw = config.feature_width;
        let feat = |branch: &str, cin: usize| {
            vec![
                Conv::same(&format!("{name}.{branch}.0"), cin, fw, 3),
                Conv::same(&format!("{name}.{branch}.1"), fw, fw, 3),
            ]
        };
        Ok(Self {
            config,
            feat_rgb: feat("feat_rgb", 3),
            feat_depth: feat("feat_depth", 1),
            unet: UNet::new(
                &format!("{name}.unet"),
                3 + 1 + 1 + 1 + 2 * fw,
                1,
                config.unet_base,
                config.unet_depth,
                config.norm,
                config.groups,
            )?,
        })
    }

    pub fn divisor(&self) -> usize {
        self.unet.divisor()
    }

    /// `rgb: [N, 3, H, W]`, `depth` and `guidance: [N, 1, H, W]`; returns
    /// the enhanced depth `[N, 1, H, W]` in `(0, 1)`. Gradients flow to the
    /// network only; `depth` and `guidance` are treated as data.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape<T>,
        rgb: Var<'t, T>,
        depth: Var<'t, T>,
        guidance: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let d = self.divisor();
        let a = expect_nchw("enhancement rgb", &rgb, 3, d)?;
        let b = expect_nchw("enhancement depth", &depth, 1, d)?;
        let c = expect_nchw("enhancement guidance", &guidance, 1, d)?;
        same_batch("enhancement", a, b)?;
        same_batch("enhancement", a, c)?;

        let dv = depth.value();
        let gv = guidance.value();
        let mask = dv.map(|v| if v > T::zero() { T::one() } else { T::zero() });
        let mut fr = rgb;
        for l in &self.feat_rgb {
            fr = l.forward(tape, fr)?.relu();
        }
        let mut fd = depth;
        for l in &self.feat_depth {
            fd = l.forward(tape, fd)?.relu();
        }
        let x = Var::concat_channels(&[rgb, depth, guidance, tape.constant(mask), fr, fd])?;
        let r = self.unet.forward(tape, x)?;
        if !self.config.residual {
            return Ok(r.sigmoid());
        }
        let base: Vec<T> = dv
            .data()
            .iter()
            .zip(gv.data())
            .map(|(&d, &g)| if d > T::zero() { d } else { g })
            .collect();
        let base = tape.constant(Tensor::new(dv.shape().to_vec(), base)?);
        Ok(base.logit(self.config.logit_eps).add(r)?.sigmoid())
    }
}

impl<T: Real> Module<T> for EnhancementNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [unet], [feat_rgb, feat_depth]);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [unet], [feat_rgb, feat_depth]);
    }
}

/// Generated depth below this (normalized units) counts as a hole.
pub const HOLE_SNAP: f64 = 1e-3;

/// Zeroes values below [`HOLE_SNAP`].
pub fn snap_holes<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let thr = T::of(HOLE_SNAP);
    t.map(|v| if v < thr { T::zero() } else { v })
}

/// The two translation generators, optimized jointly.
#[derive(Debug, Clone)]
pub struct GeneratorPair<T: Real> {
    pub l2h: GeneratorNet<T>,
    pub h2l: GeneratorNet<T>,
}

impl<T: Real> GeneratorPair<T> {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        Ok(Self {
            l2h: GeneratorNet::new("g_l2h", config)?,
            h2l: GeneratorNet::new("g_h2l", config)?,
        })
    }
}

impl<T: Real> Module<T> for GeneratorPair<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [l2h, h2l], []);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [l2h, h2l], []);
    }
}

/// Depth and normal discriminators for each domain.
#[derive(Debug, Clone)]
pub struct DiscriminatorSet<T: Real> {
    pub low_depth: DiscriminatorNet<T>,
    pub low_normal: DiscriminatorNet<T>,
    pub high_depth: DiscriminatorNet<T>,
    pub high_normal: DiscriminatorNet<T>,
}

impl<T: Real> DiscriminatorSet<T> {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        let depth = DiscriminatorConfig { in_channels: 1, ..config };
        let normal = DiscriminatorConfig { in_channels: 3, ..config };
        Ok(Self {
            low_depth: DiscriminatorNet::new("d_low_depth", depth)?,
            low_normal: DiscriminatorNet::new("d_low_normal", normal)?,
            high_depth: DiscriminatorNet::new("d_high_depth", depth)?,
            high_normal: DiscriminatorNet::new("d_high_normal", normal)?,
        })
    }

    pub fn update_spectral(&mut self, iterations: usize) -> Result<()> {
        self.low_depth.update_spectral(iterations)?;
        self.low_normal.update_spectral(iterations)?;
        self.high_depth.update_spectral(iterations)?;
        self.high_normal.update_spectral(iterations)
    }
}

impl<T: Real> Module<T> for DiscriminatorSet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        visit_all!(self, f, visit_params, iter, [low_depth, low_normal, high_depth, high_normal], []);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        visit_all!(self, f, visit_params_mut, iter_mut, [low_depth, low_normal, high_depth, high_normal], []);
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::autodiff::Adam;

    fn ramp(shape: [usize; 4], k: f64) -> Tensor<f32> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|i| 0.2 + 0.6 * ((i as f64 * k).sin() * 0.5 + 0.5)).collect();
        Tensor::from_f64(shape, &data).unwrap()
    }

    fn conv_count(cin: usize, cout: usize, k: usize) -> usize {
        cout * cin * k * k + cout
    }

    fn unique_names(net: &dyn Module<f32>) {
        let names: Vec<&str> = net.params().iter().map(|p| p.name()).collect();
        let set: HashSet<&str> = names.iter().copied().collect();
        assert_eq!(set.len(), names.len(), "duplicate parameter names");
    }

    #[test]
    fn xavier_bound_for_square_layer() {
        // fan-in = fan-out = 100 gives sqrt(6 / 200)
        let mut conv = Conv::<f64>::same("c", 100, 100, 1);
        xavier_init(&mut conv, 3).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        let w = conv.weight.value().data();
        assert!(w.iter().all(|v| v.abs() <= bound));
        let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 0.95 * bound);
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - bound * bound / 3.0).abs() < 0.05 * bound * bound / 3.0);
        assert!(conv.bias.value().data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        let mk = |seed| {
            let mut g = GeneratorNet::<f32>::new("g", GeneratorConfig::default()).unwrap();
            xavier_init(&mut g, seed).unwrap();
            g.params().iter().map(|p| p.value().data().to_vec()).collect::<Vec<_>>()
        };
        assert_eq!(mk(1), mk(1));
        assert_ne!(mk(1), mk(2));
    }

    #[test]
    fn generator_starts_as_identity() {
        let mut g = GeneratorNet::<f32>::new("g", GeneratorConfig::default()).unwrap();
        xavier_init(&mut g, 0).unwrap();
        let tape = Tape::new();
        let depth = ramp([2, 1, 8, 12], 0.37);
        let out = g
            .forward(&tape, tape.input(ramp([2, 3, 8, 12], 0.11)), tape.input(depth.clone()))
            .unwrap();
        assert_eq!(out.shape(), vec![2, 1, 8, 12]);
        for (a, b) in out.value().data().iter().zip(depth.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn generator_gradients_reach_every_parameter_after_a_step() {
        let mut g = GeneratorNet::<f32>::new("g", GeneratorConfig::default()).unwrap();
        xavier_init(&mut g, 4).unwrap();
        let adam = Adam::GENERATOR;
        for step in 0..2 {
            let tape = Tape::new();
            let out = g
                .forward(&tape, tape.input(ramp([1, 3, 8, 8], 0.2)), tape.input(ramp([1, 1, 8, 8], 0.5)))
                .unwrap();
            let loss = out.add_scalar(-0.9).square().mean();
            let grads = loss.backward().unwrap();
            if step == 1 {
                // the zero-initialized head blocks the upstream path until
                // the first update moves it
                for p in g.params() {
                    let gr = grads.of_param(p).unwrap();
                    assert!(gr.max_abs() > 0.0, "{} has zero gradient", p.name());
                }
            }
            adam.step(&mut g, &grads, 1e-3).unwrap();
        }
    }

    #[test]
    fn generator_rejects_bad_shapes() {
        let g = GeneratorNet::<f32>::new("g", GeneratorConfig::default()).unwrap();
        let tape = Tape::new();
        let rgb = tape.input(Tensor::zeros([1, 3, 8, 8]));
        assert!(g.forward(&tape, rgb, tape.input(Tensor::zeros([1, 2, 8, 8]))).is_err());
        assert!(g.forward(&tape, rgb, tape.input(Tensor::zeros([1, 1, 8, 6]))).is_err());
        let odd = tape.input(Tensor::zeros([1, 3, 7, 8]));
        assert!(g.forward(&tape, odd, tape.input(Tensor::zeros([1, 1, 7, 8]))).is_err());
    }

    #[test]
    fn generator_parameter_count() {
        let g = GeneratorNet::<f32>::new("g", GeneratorConfig::default()).unwrap();
        let norm = |c: usize| 2 * c;
        let enc = |cin| conv_count(cin, 8, 3) + norm(8) + conv_count(8, 8, 3) + norm(8);
        let res = 2 * (conv_count(16, 16, 3) + norm(16));
        let expected = enc(3) + enc(1) + 3 * res + conv_count(16, 8, 3) + norm(8) + conv_count(8, 1, 3);
        assert_eq!(g.param_count(), expected);
        assert_eq!(g.param_count(), 16_897);
        unique_names(&g);
    }

    #[test]
    fn discriminator_maps_to_quarter_resolution() {
        let mut d = DiscriminatorNet::<f32>::new("d", DiscriminatorConfig::default()).unwrap();
        xavier_init(&mut d, 1).unwrap();
        d.update_spectral(1).unwrap();
        let tape = Tape::new();
        let out = d.forward(&tape, tape.input(ramp([1, 1, 64, 64], 0.3))).unwrap();
        assert_eq!(out.shape(), vec![1, 1, 16, 16]);
        let odd = d.forward(&tape, tape.input(Tensor::zeros([1, 1, 47, 63]))).unwrap();
        assert_eq!(odd.shape(), vec![1, 1, 11, 15]);
        assert!(d.forward(&tape, tape.input(Tensor::zeros([1, 1, 3, 8]))).is_err());
        assert!(d.forward(&tape, tape.input(Tensor::zeros([1, 3, 8, 8]))).is_err());
        let expected = conv_count(1, 16, 4) + conv_count(16, 32, 4) + conv_count(32, 1, 3);
        assert_eq!(d.param_count(), expected);
        assert!(d.params().iter().filter(|p| p.shape().len() == 4).all(|p| p.spectral_state().is_some()));
        unique_names(&d);
    }

    #[test]
    fn discriminator_weights_are_scaled_to_unit_norm() {
        let mut d = DiscriminatorNet::<f64>::new("d", DiscriminatorConfig::default()).unwrap();
        xavier_init(&mut d, 2).unwrap();
        d.update_spectral(50).unwrap();
        let tape = Tape::new();
        // a scaled-up copy of the weights must give the same scores
        let x = tape.input(Tensor::full([1, 1, 8, 8], 0.5));
        let a = d.forward(&tape, x).unwrap().value();
        let mut big = d.clone();
        big.visit_params_mut(&mut |p| {
            if p.name().ends_with(".weight") {
                *p.value_mut() = p.value().map(|v| 3.0 * v);
            }
        });
        let b = big.forward(&tape, x).unwrap().value();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn guidance_domains_share_decoder_only() {
        let mut g = GuidanceNet::<f32>::new("f", GuidanceConfig::default()).unwrap();
        xavier_init(&mut g, 5).unwrap();
        let tape = Tape::new();
        let rgb = ramp([1, 3, 16, 24], 0.13);
        let lo = g.forward(&tape, tape.input(rgb.clone()), Quality::Low).unwrap();
        let hi = g.forward(&tape, tape.input(rgb), Quality::High).unwrap();
        assert_eq!(lo.shape(), vec![1, 1, 16, 24]);
        assert!(lo.value().data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_ne!(lo.value().data(), hi.value().data());
        let grads = lo.mean().backward().unwrap();
        for p in g.params() {
            let reached = grads.of_param(p).is_some_and(|t| t.max_abs() > 0.0);
            assert_eq!(reached, !p.name().starts_with("f.enc_high"), "{}", p.name());
        }
        unique_names(&g);
        assert!(g.forward(&tape, tape.input(Tensor::zeros([1, 3, 10, 8])), Quality::Low).is_err());
    }

    #[test]
    fn enhancement_keeps_shape_and_range() {
        for residual in [true, false] {
            let cfg = EnhancementConfig { residual, ..EnhancementConfig::default() };
            let mut f = EnhancementNet::<f32>::new("e", cfg).unwrap();
            xavier_init(&mut f, 6).unwrap();
            let tape = Tape::new();
            let mut depth = ramp([2, 1, 16, 16], 0.7);
            depth.data_mut()[..20].fill(0.0);
            let out = f
                .forward(
                    &tape,
                    tape.input(ramp([2, 3, 16, 16], 0.3)),
                    tape.input(depth),
                    tape.input(Tensor::full([2, 1, 16, 16], 0.5)),
                )
                .unwrap();
            assert_eq!(out.shape(), vec![2, 1, 16, 16]);
            assert!(out.value().data().iter().all(|&v| v > 0.0 && v < 1.0));
            let grads = out.mean().backward().unwrap();
            assert!(f.params().iter().all(|p| grads.of_param(p).is_some()));
            unique_names(&f);
        }
    }

    #[test]
    fn enhancement_rejects_mismatched_inputs() {
        let f = EnhancementNet::<f32>::new("e", EnhancementConfig::default()).unwrap();
        let tape = Tape::new();
        let rgb = tape.input(Tensor::zeros([1, 3, 16, 16]));
        let d = tape.input(Tensor::zeros([1, 1, 16, 16]));
        assert!(f.forward(&tape, rgb, d, tape.input(Tensor::zeros([1, 1, 8, 16]))).is_err());
        assert!(f.forward(&tape, rgb, tape.input(Tensor::zeros([2, 1, 16, 16])), d).is_err());
        let odd = tape.input(Tensor::zeros([1, 3, 18, 16]));
        assert!(f.forward(&tape, odd, tape.input(Tensor::zeros([1, 1, 18, 16])), tape.input(Tensor::zeros([1, 1, 18, 16]))).is_err());
    }
}
