use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{depth_tensor, downsample_rgb, draw_batch, rgb_tensor, tensor_depth, upsample_depth_tensor, Batch, Sample};
use super::{lr_at, PhaseConfig, TrainLog};
use crate::autodiff::{Adam, Tape, Tensor};
use crate::datagen::{apply_holes, derive_seed, sample_hole_plan, Quality};
use crate::depth::{bicubic_upsample, DepthMap, RgbImage};
use crate::losses::{
    enhancement_pseudo_loss, enhancement_self_loss, masked_l1, translation_discriminator_loss,
    translation_total_loss, LossWeights, TranslationBatch,
};
use crate::nets::{snap_holes, DiscriminatorSet, EnhancementNet, GeneratorNet, GeneratorPair, GuidanceNet};
use crate::{Error, Result};

/// Optimizer of the enhancement network.
pub const ENHANCEMENT_ADAM: Adam = Adam::GUIDANCE;

fn phase_rngs(cfg: &PhaseConfig) -> (ChaCha8Rng, ChaCha8Rng) {
    (
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0])),
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1])),
    )
}

/// Sizes of the low and high halves of a mixed batch.
fn halves(cfg: &PhaseConfig) -> Result<(usize, usize)> {
    cfg.validate()?;
    if cfg.batch_size < 2 {
        return Err(Error::Config("mixed-domain batches need batch_size >= 2".into()));
    }
    let high = cfg.batch_size / 2;
    Ok((cfg.batch_size - high, high))
}

/// Concatenates two tensors along the batch axis.
fn cat(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    if a.shape()[1..] != b.shape()[1..] {
        return Err(Error::shape("cat", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    Tensor::new(shape, [a.data(), b.data()].concat())
}

/// Batch items `[start, start + len)`.
fn part(t: &Tensor<f32>, start: usize, len: usize) -> Result<Tensor<f32>> {
    let item = t.numel() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = len;
    Tensor::new(shape, t.data()[start * item..(start + len) * item].to_vec())
}

fn guidance_of(b: &Batch) -> Result<&Tensor<f32>> {
    b.guidance
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("enhancement samples need a guidance estimate".into()))
}

/// Masked L1 pre-training of the guidance network on half/half batches;
/// each half uses the encoder of its domain and ignores target holes.
pub fn train_guidance(
    f_rgb: &mut GuidanceNet<f32>,
    low: &[Sample],
    high: &[Sample],
    cfg: &PhaseConfig,
) -> Result<TrainLog> {
    let (n_low, n_high) = halves(cfg)?;
    if low.is_empty() || high.is_empty() {
        return Err(Error::Empty("guidance training needs frames from both domains".into()));
    }
    let (mut rng, _) = phase_rngs(cfg);
    let mut log = TrainLog::new(&["low", "high", "total"], cfg.log_every);
    for it in 0..cfg.iterations {
        let lr = lr_at(&cfg.schedule, it);
        let bl = draw_batch(&mut rng, low, n_low, &cfg.augment)?;
        let bh = draw_batch(&mut rng, high, n_high, &cfg.augment)?;
        let tape = Tape::new();
        let term = |b: &Batch, q: Quality| {
            let pred = f_rgb.forward(&tape, tape.constant(b.rgb.clone()), q)?;
            masked_l1(pred, tape.constant(b.depth.clone()), &b.depth)
        };
        let (l, h) = (term(&bl, Quality::Low)?, term(&bh, Quality::High)?);
        let total = l.add(h)?;
        log.record(it, lr, &[l.item(), h.item(), total.item()])?;
        let grads = total.backward()?;
        Adam::GUIDANCE.step(f_rgb, &grads, lr)?;
    }
    Ok(log)
}

/// Guidance estimate for an RGB frame whose depth is `factor` times the
/// guidance training resolution: computed on the box-downsampled image and
/// bicubically upsampled back.
pub fn guidance_map(f_rgb: &GuidanceNet<f32>, rgb: &RgbImage, factor: usize, domain: Quality) -> Result<Tensor<f32>> {
    let low = downsample_rgb(rgb, factor)?;
    let tape = Tape::no_grad();
    let g = f_rgb.forward(&tape, tape.constant(rgb_tensor(&low)), domain)?;
    upsample_depth_tensor(&g.value(), factor)
}

fn sample_rgb(s: &Sample) -> Result<RgbImage> {
    let (w, h) = s.dims();
    RgbImage::new(w, h, s.rgb.data().iter().map(|&v| v as f64).collect())
}

/// Fills in the frozen guidance estimate of every sample.
pub fn attach_guidance(
    f_rgb: &GuidanceNet<f32>,
    samples: &mut [Sample],
    domain: Quality,
    factor: usize,
) -> Result<()> {
    for s in samples {
        s.guidance = Some(guidance_map(f_rgb, &sample_rgb(s)?, factor, domain)?);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TranslationReport {
    pub log: TrainLog,
    pub generator_steps: usize,
    pub discriminator_steps: usize,
}

pub const TRANSLATION_COLUMNS: [&str; 8] = [
    "cycle",
    "range",
    "identity",
    "adv_low_depth",
    "adv_low_normal",
    "adv_high_depth",
    "adv_high_normal",
    "discriminator",
];

/// Unpaired translation training. Each iteration refreshes the spectral
/// estimates, takes `ratio` generator steps on fresh batches drawn
/// independently from both sets, then one discriminator step on the last
/// generator outputs.
pub fn train_translation(
    gens: &mut GeneratorPair<f32>,
    discs: &mut DiscriminatorSet<f32>,
    set_l: &[Sample],
    set_h: &[Sample],
    cfg: &PhaseConfig,
) -> Result<TranslationReport> {
    cfg.validate()?;
    if set_l.is_empty() || set_h.is_empty() {
        return Err(Error::Empty("translation needs low- and high-quality frames".into()));
    }
    let weights = LossWeights::resolve(&cfg.preset)?;
    let (mut rng, _) = phase_rngs(cfg);
    let mut log = TrainLog::new(&TRANSLATION_COLUMNS, cfg.log_every);
    let (mut g_steps, mut d_steps) = (0, 0);
    for it in 0..cfg.iterations {
        let lr = lr_at(&cfg.schedule, it);
        discs.update_spectral(1)?;
        let mut last = None;
        for _ in 0..cfg.ratio {
            let bl = draw_batch(&mut rng, set_l, cfg.batch_size, &cfg.augment)?;
            let bh = draw_batch(&mut rng, set_h, cfg.batch_size, &cfg.augment)?;
            let batch = TranslationBatch {
                rgb_l: bl.rgb,
                d_l: bl.depth,
                rgb_h: bh.rgb,
                d_h: bh.depth,
            };
            let tape = Tape::new();
            let terms = translation_total_loss(&tape, &batch, gens, discs, &weights)?;
            let mut values = vec![terms.cycle.item(), terms.range.item(), terms.identity.item()];
            values.extend(terms.adversarial.iter().map(|a| a.item()));
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    component: TRANSLATION_COLUMNS[i].to_string(),
                    iteration: it,
                });
            }
            let grads = terms.total.backward()?;
            Adam::GENERATOR.step(gens, &grads, lr)?;
            g_steps += 1;
            last = Some((batch, terms.outputs, values));
        }
        let (batch, outputs, mut values) = last.expect("ratio >= 1");
        let tape = Tape::new();
        let (total, _) = translation_discriminator_loss(&tape, &batch, &outputs, discs)?;
        values.push(total.item());
        log.record(it, lr, &values)?;
        let grads = total.backward()?;
        Adam::DISCRIMINATOR.step(discs, &grads, lr)?;
        d_steps += 1;
    }
    Ok(TranslationReport {
        log,
        generator_steps: g_steps,
        discriminator_steps: d_steps,
    })
}

#[derive(Debug, Clone)]
pub struct EnhancementReport {
    pub log: TrainLog,
    /// Samples that went through the hole-augmentation draw.
    pub hole_draws: usize,
    /// Of those, samples that received holes.
    pub hole_applied: usize,
}

/// Per-sample rectangular hole augmentation in place.
fn augment_batch(rng: &mut ChaCha8Rng, t: &mut Tensor<f32>, prob: f64, counts: &mut (usize, usize)) -> Result<()> {
    let (n, _, h, w) = t.dims4()?;
    let plane = h * w;
    for i in 0..n {
        counts.0 += 1;
        if let Some(rects) = sample_hole_plan(w, h, rng, prob) {
            apply_holes(&mut t.data_mut()[i * plane..(i + 1) * plane], w, &rects);
            counts.1 += 1;
        }
    }
    Ok(())
}

/// Degraded copy of `rgb`/`depth` through the frozen generator, computed
/// without recording gradients; near-zero outputs become holes.
fn pseudo_input(g_h2l: &GeneratorNet<f32>, rgb: &Tensor<f32>, depth: &Tensor<f32>) -> Result<Tensor<f32>> {
    let tape = Tape::no_grad();
    let out = g_h2l.forward(&tape, tape.constant(rgb.clone()), tape.constant(depth.clone()))?;
    Ok(snap_holes(&out.value()))
}

/// One optimizer step of `fe` on a mixed batch: the first `n_high` items
/// are pseudo-examples against their clean depth, the rest real frames
/// supervised by themselves.
#[allow(clippy::too_many_arguments)]
fn enhancement_step(
    fe: &mut EnhancementNet<f32>,
    weights: &LossWeights,
    rgb: Tensor<f32>,
    input: Tensor<f32>,
    guidance: Tensor<f32>,
    target: Tensor<f32>,
    n_high: usize,
    lr: f64,
) -> Result<[f64; 3]> {
    let n = rgb.shape()[0];
    let tape = Tape::new();
    let pred = fe.forward(
        &tape,
        tape.constant(rgb.clone()),
        tape.constant(input.clone()),
        tape.constant(guidance),
    )?;
    let (input_h, target_h) = (part(&input, 0, n_high)?, part(&target, 0, n_high)?);
    let (input_l, target_l, rgb_l) = (
        part(&input, n_high, n - n_high)?,
        part(&target, n_high, n - n_high)?,
        part(&rgb, n_high, n - n_high)?,
    );
    let pseudo = enhancement_pseudo_loss(
        pred.slice(0, 0, n_high)?,
        tape.constant(target_h),
        &input_h,
        &weights.high,
    )?;
    let real = enhancement_self_loss(
        pred.slice(0, n_high, n - n_high)?,
        tape.constant(target_l),
        &input_l,
        &rgb_l,
        &weights.low,
    )?;
    let total = pseudo.add(real)?;
    let values = [pseudo.item(), real.item(), total.item()];
    if !values.iter().all(|v| v.is_finite()) {
        return Ok(values);
    }
    let grads = total.backward()?;
    ENHANCEMENT_ADAM.step(fe, &grads, lr)?;
    Ok(values)
}

/// Enhancement training on one mixed batch per iteration: pseudo-examples
/// `(G_H2L(d_H), d_H)` synthesized on the fly by the frozen generator, and
/// real low-quality frames supervised by themselves. Inputs of both halves
/// receive hole augmentation with `cfg.hole_prob`. The frozen networks are
/// only borrowed, so their weights cannot change.
pub fn train_enhancement(
    fe: &mut EnhancementNet<f32>,
    g_h2l: &GeneratorNet<f32>,
    f_rgb: &GuidanceNet<f32>,
    set_l: &[Sample],
    set_h: &[Sample],
    cfg: &PhaseConfig,
) -> Result<EnhancementReport> {
    let (n_low, n_high) = halves(cfg)?;
    if set_l.is_empty() || set_h.is_empty() {
        return Err(Error::Empty("enhancement needs low- and high-quality frames".into()));
    }
    let weights = LossWeights::resolve(&cfg.preset)?;
    let with_guidance = |set: &[Sample], q: Quality| -> Result<Vec<Sample>> {
        let mut v = set.to_vec();
        if v.iter().any(|s| s.guidance.is_none()) {
            attach_guidance(f_rgb, &mut v, q, 1)?;
        }
        Ok(v)
    };
    let (set_l, set_h) = (with_guidance(set_l, Quality::Low)?, with_guidance(set_h, Quality::High)?);
    let (mut rng, mut hole_rng) = phase_rngs(cfg);
    let mut log = TrainLog::new(&ENHANCEMENT_COLUMNS, cfg.log_every);
    let mut counts = (0, 0);
    for it in 0..cfg.iterations {
        let lr = lr_at(&cfg.schedule, it);
        let bh = draw_batch(&mut rng, &set_h, n_high, &cfg.augment)?;
        let bl = draw_batch(&mut rng, &set_l, n_low, &cfg.augment)?;
        let mut pseudo = pseudo_input(g_h2l, &bh.rgb, &bh.depth)?;
        augment_batch(&mut hole_rng, &mut pseudo, cfg.hole_prob, &mut counts)?;
        let mut real = bl.depth.clone();
        augment_batch(&mut hole_rng, &mut real, cfg.hole_prob, &mut counts)?;
        let values = enhancement_step(
            fe,
            &weights,
            cat(&bh.rgb, &bl.rgb)?,
            cat(&pseudo, &real)?,
            cat(guidance_of(&bh)?, guidance_of(&bl)?)?,
            cat(&bh.depth, &bl.depth)?,
            n_high,
            lr,
        )?;
        log.record(it, lr, &values)?;
    }
    Ok(EnhancementReport {
        log,
        hole_draws: counts.0,
        hole_applied: counts.1,
    })
}

pub const ENHANCEMENT_COLUMNS: [&str; 3] = ["pseudo", "self", "total"];

/// A high-quality frame at full resolution with its downsampled copy, the
/// generator input for super-resolution pseudo-examples.
#[derive(Debug, Clone)]
pub struct SrPair {
    /// Guidance-equipped full-resolution frame; its depth is the target.
    pub high: Sample,
    pub low: Sample,
}

fn check_resolution(s: &Sample, what: &str) -> Result<()> {
    let (w, h) = s.dims();
    let rgb = s.rgb.shape();
    let guide_ok = s.guidance.as_ref().is_none_or(|g| g.shape() == s.depth.shape());
    if rgb[2] != h || rgb[3] != w || !guide_ok {
        return Err(Error::Dimension(format!(
            "{what}: depth {w}x{h} does not match rgb {}x{} or guidance",
            rgb[3], rgb[2]
        )));
    }
    Ok(())
}

fn stack_items(items: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let owned: Vec<Tensor<f32>> = items.iter().map(|t| (*t).clone()).collect();
    Tensor::stack(&owned)
}

/// Fine-tunes `fe` for `factor`x super-resolution. Real inputs are
/// bicubically upsampled low-quality frames; pseudo inputs are
/// `bicubic(G_H2L(d_H_down))` against the full-resolution `d_H`. No
/// geometric augmentation is supported.
#[allow(clippy::too_many_arguments)]
pub fn finetune_sr(
    fe: &mut EnhancementNet<f32>,
    g_h2l: &GeneratorNet<f32>,
    f_rgb: &GuidanceNet<f32>,
    set_l_up: &[Sample],
    set_h: &[SrPair],
    factor: usize,
    cfg: &PhaseConfig,
) -> Result<EnhancementReport> {
    let (n_low, n_high) = halves(cfg)?;
    if !cfg.augment.is_identity() {
        return Err(Error::Config("super-resolution fine-tuning takes whole frames only".into()));
    }
    if set_l_up.is_empty() || set_h.is_empty() {
        return Err(Error::Empty("fine-tuning needs low- and high-quality frames".into()));
    }
    for s in set_l_up {
        check_resolution(s, "upsampled input")?;
    }
    for p in set_h {
        check_resolution(&p.high, "high-quality frame")?;
        let ((hw, hh), (lw, lh)) = (p.high.dims(), p.low.dims());
        if hw != factor * lw || hh != factor * lh {
            return Err(Error::Dimension(format!("{hw}x{hh} is not {factor}x of {lw}x{lh}")));
        }
    }
    let weights = LossWeights::resolve(&cfg.preset)?;
    let mut set_l = set_l_up.to_vec();
    if set_l.iter().any(|s| s.guidance.is_none()) {
        attach_guidance(f_rgb, &mut set_l, Quality::Low, factor)?;
    }
    let mut pairs = set_h.to_vec();
    for p in pairs.iter_mut().filter(|p| p.high.guidance.is_none()) {
        p.high.guidance = Some(guidance_map(f_rgb, &sample_rgb(&p.high)?, factor, Quality::High)?);
    }
    let (mut rng, mut hole_rng) = phase_rngs(cfg);
    let mut log = TrainLog::new(&ENHANCEMENT_COLUMNS, cfg.log_every);
    let mut counts = (0, 0);
    for it in 0..cfg.iterations {
        let lr = lr_at(&cfg.schedule, it);
        let picked: Vec<&SrPair> = (0..n_high).map(|_| &pairs[rng.random_range(0..pairs.len())]).collect();
        let bl = draw_batch(&mut rng, &set_l, n_low, &cfg.augment)?;
        let mut pseudo = Vec::with_capacity(n_high);
        for p in &picked {
            let low = pseudo_input(g_h2l, &p.low.rgb, &p.low.depth)?;
            pseudo.push(depth_tensor(&bicubic_upsample(&tensor_depth(&low, 0)?, factor)?));
        }
        let mut pseudo = Tensor::stack(&pseudo)?;
        augment_batch(&mut hole_rng, &mut pseudo, cfg.hole_prob, &mut counts)?;
        let mut real = bl.depth.clone();
        augment_batch(&mut hole_rng, &mut real, cfg.hole_prob, &mut counts)?;
        let rgb_h = stack_items(&picked.iter().map(|p| &p.high.rgb).collect::<Vec<_>>())?;
        let depth_h = stack_items(&picked.iter().map(|p| &p.high.depth).collect::<Vec<_>>())?;
        let guide_h: Vec<&Tensor<f32>> = picked.iter().map(|p| p.high.guidance.as_ref().expect("attached")).collect();
        let values = enhancement_step(
            fe,
            &weights,
            cat(&rgb_h, &bl.rgb)?,
            cat(&pseudo, &real)?,
            cat(&stack_items(&guide_h)?, guidance_of(&bl)?)?,
            cat(&depth_h, &bl.depth)?,
            n_high,
            lr,
        )?;
        log.record(it, lr, &values)?;
    }
    Ok(EnhancementReport {
        log,
        hole_draws: counts.0,
        hole_applied: counts.1,
    })
}

/// Enhances (`factor` 1) or super-resolves (`factor` 2) a low-quality depth
/// map given the RGB frame at the output resolution. Returns millimeters.
pub fn infer(
    fe: &EnhancementNet<f32>,
    f_rgb: &GuidanceNet<f32>,
    rgb: &RgbImage,
    depth_lq: &DepthMap,
    factor: usize,
) -> Result<DepthMap> {
    if !matches!(factor, 1 | 2) {
        return Err(Error::InvalidArgument(format!("factor must be 1 or 2, got {factor}")));
    }
    let up = if factor > 1 {
        bicubic_upsample(depth_lq, factor)?
    } else {
        depth_lq.clone()
    };
    if rgb.dims() != up.dims() {
        return Err(Error::Dimension(format!(
            "rgb {:?} vs upsampled depth {:?}",
            rgb.dims(),
            up.dims()
        )));
    }
    let (w, h) = up.dims();
    let div = fe.divisor().max(f_rgb.divisor() * factor);
    if w % div != 0 || h % div != 0 {
        return Err(Error::Dimension(format!("{w}x{h} must be divisible by {div}")));
    }
    let guidance = guidance_map(f_rgb, rgb, factor, Quality::Low)?;
    let tape = Tape::no_grad();
    let out = fe.forward(
        &tape,
        tape.constant(rgb_tensor(rgb)),
        tape.constant(depth_tensor(&up)),
        tape.constant(guidance),
    )?;
    tensor_depth(&out.value(), 0)
}
