use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{downsample_rgb, Sample};
use super::phases::{finetune_sr, infer, train_enhancement, train_guidance, train_translation, SrPair};
use super::{full_schedule, PhaseConfig, TrainLog};
use crate::autodiff::{encode_checkpoint, param_digest, Module};
use crate::datagen::{build_splits, derive_seed, generate_frames, DegradationSpec, Split, SplitFractions, SynthConfig, SynthFrame};
use crate::depth::{bicubic_upsample, DepthMap};
use crate::metrics::{masked_error_stats, paired_surface_error, ErrorReport, PairedSurface};
use crate::nets::{
    xavier_init, DiscriminatorConfig, DiscriminatorSet, EnhancementConfig, EnhancementNet, GeneratorConfig,
    GeneratorPair, GuidanceConfig, GuidanceNet, NormKind,
};
use crate::{Error, Result};

/// Everything needed to reproduce an end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub fractions: SplitFractions,
    /// Seed of the split and of network initialization.
    pub seed: u64,
    pub guidance_net: GuidanceConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub enhancement_net: EnhancementConfig,
    pub guidance: PhaseConfig,
    pub translation: PhaseConfig,
    pub enhancement: PhaseConfig,
    pub sr: PhaseConfig,
}

impl PipelineConfig {
    /// Small networks and iteration counts that finish in minutes on one
    /// core: 16 scenes at 64x48 with a 2x degradation factor.
    pub fn micro(seed: u64) -> Self {
        let phase = |it, batch, sched: &str, preset: &str, salt| {
            PhaseConfig::micro(it, batch, full_schedule(sched).expect("known"), preset, derive_seed(seed, &[salt]))
        };
        let mut translation = phase(800, 2, "translation-scannet", "scannet-renderscannet-phase1", 2);
        translation.ratio = 3;
        translation.augment.hflip = true;
        translation.augment.rotate = true;
        let mut enhancement = phase(1500, 4, "enhancement-full", "scannet-renderscannet-phase1", 3);
        enhancement.augment.hflip = true;
        enhancement.augment.rotate = true;
        let mut guidance = phase(500, 4, "guidance", "scannet-renderscannet-phase1", 1);
        guidance.schedule.initial_lr = 2e-3;
        guidance.augment.hflip = true;
        Self {
            synth: SynthConfig {
                seed,
                degradation: DegradationSpec {
                    downsample: 2,
                    ..DegradationSpec::default()
                },
                ..SynthConfig::default()
            },
            fractions: SplitFractions::default(),
            seed,
            guidance_net: GuidanceConfig {
                width: 8,
                res_blocks: 1,
                unet_base: 8,
                unet_depth: 2,
            },
            generator: GeneratorConfig {
                width: 8,
                res_blocks: 1,
                groups: 2,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                width: 8,
                ..DiscriminatorConfig::default()
            },
            enhancement_net: EnhancementConfig {
                feature_width: 4,
                unet_base: 8,
                unet_depth: 3,
                norm: NormKind::Group,
                groups: 2,
                ..EnhancementConfig::default()
            },
            guidance,
            translation,
            enhancement,
            sr: phase(300, 4, "sr-finetune", "sr-finetune", 4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.synth.degradation.downsample != 2 {
            return Err(Error::Config("the pipeline evaluates 2x super-resolution; set downsample to 2".into()));
        }
        for p in [&self.guidance, &self.translation, &self.enhancement, &self.sr] {
            p.validate()?;
        }
        Ok(())
    }
}

/// Held-out test metrics, pooled over frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    /// Low-quality input against the downsampled clean depth.
    pub lq: ErrorReport,
    /// Enhancement output at the input resolution.
    pub enhanced: ErrorReport,
    /// Bicubic upsampling of the input against full-resolution depth.
    pub bicubic: ErrorReport,
    /// 2x output of the enhancement network before fine-tuning.
    pub sr_before: ErrorReport,
    pub sr: ErrorReport,
    /// Enhancement output and input MSE_v on their common valid pixels.
    pub enhanced_vs_lq: PairedSurface,
    /// Fine-tuned 2x output and bicubic MSE_v on their common valid pixels.
    pub sr_vs_bicubic: PairedSurface,
}

impl PipelineMetrics {
    pub fn to_csv(&self) -> String {
        let mut s = format!("model,{},mae_v,n_v\n", ErrorReport::CSV_HEADER);
        for (name, r) in self.rows() {
            s.push_str(&format!("{name},{},{},{}\n", r.csv_row(), r.mae_v, r.n_v));
        }
        s.push_str("\npair,mse_v_pred,mse_v_baseline,n\n");
        for (name, p) in [("enhanced_vs_lq", &self.enhanced_vs_lq), ("sr_vs_bicubic", &self.sr_vs_bicubic)] {
            s.push_str(&format!("{name},{},{},{}\n", p.pred, p.baseline, p.n));
        }
        s
    }

    pub fn rows(&self) -> [(&'static str, &ErrorReport); 5] {
        [
            ("lq", &self.lq),
            ("enhanced", &self.enhanced),
            ("bicubic", &self.bicubic),
            ("sr_before", &self.sr_before),
            ("sr", &self.sr),
        ]
    }
}

/// Outputs of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub metrics: PipelineMetrics,
    /// Network checkpoints in the autodiff container format, by file stem.
    pub checkpoints: Vec<(String, Vec<u8>)>,
    /// Training logs by phase.
    pub logs: Vec<(String, TrainLog)>,
    pub generator_steps: usize,
    pub discriminator_steps: usize,
    /// Guidance and degradation generator digests right after their own
    /// phase and at the end of the run.
    pub frozen_digests: [(String, String); 2],
}

impl PipelineArtifacts {
    /// Writes `<stem>.ckpt`, `<phase>.csv` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (stem, bytes) in &self.checkpoints {
            let p = dir.join(format!("{stem}.ckpt"));
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        for (phase, log) in &self.logs {
            log.write_csv(&dir.join(format!("{phase}.csv")))?;
        }
        let p = dir.join("metrics.csv");
        std::fs::write(&p, self.metrics.to_csv()).map_err(|e| Error::io(&p, e))
    }
}

struct Splits<'a> {
    a: Vec<&'a SynthFrame>,
    b: Vec<&'a SynthFrame>,
    test: Vec<&'a SynthFrame>,
}

fn split_frames<'a>(frames: &'a [SynthFrame], cfg: &PipelineConfig) -> Result<Splits<'a>> {
    let manifest = build_splits(frames.iter().map(SynthFrame::record).collect(), cfg.fractions, cfg.seed)?;
    let by_key: HashMap<(&str, &str), &SynthFrame> =
        frames.iter().map(|f| ((f.scene.as_str(), f.frame.as_str()), f)).collect();
    let pick = |split| -> Vec<&SynthFrame> {
        manifest
            .in_split(split)
            .map(|e| by_key[&(e.record.scene.as_str(), e.record.frame.as_str())])
            .collect()
    };
    Ok(Splits {
        a: pick(Split::TrainA),
        b: pick(Split::TrainB),
        test: pick(Split::Test),
    })
}

fn low_sample(f: &SynthFrame, depth: &DepthMap, factor: usize) -> Result<Sample> {
    Sample::new(&downsample_rgb(&f.rgb, factor)?, depth)
}

/// Unpaired training sets at the low resolution: `lq` of Train A frames
/// and `hq_down` of Train B frames.
pub fn unpaired_sets(a: &[&SynthFrame], b: &[&SynthFrame], factor: usize) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let low = a.iter().map(|f| low_sample(f, &f.lq, factor)).collect::<Result<_>>()?;
    let high = b.iter().map(|f| low_sample(f, &f.hq_down, factor)).collect::<Result<_>>()?;
    Ok((low, high))
}

/// Super-resolution fine-tuning sets: bicubically upsampled `lq` of Train
/// A frames and full/low-resolution pairs of Train B frames.
pub fn sr_sets(a: &[&SynthFrame], b: &[&SynthFrame], factor: usize) -> Result<(Vec<Sample>, Vec<SrPair>)> {
    let up = a
        .iter()
        .map(|f| Sample::new(&f.rgb, &bicubic_upsample(&f.lq, factor)?))
        .collect::<Result<_>>()?;
    let pairs = b
        .iter()
        .map(|f| {
            Ok(SrPair {
                high: Sample::new(&f.rgb, &f.hq)?,
                low: low_sample(f, &f.hq_down, factor)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((up, pairs))
}

impl PipelineConfig {
    pub fn new_guidance(&self) -> Result<GuidanceNet<f32>> {
        let mut n = GuidanceNet::new("f_rgb", self.guidance_net)?;
        xavier_init(&mut n, derive_seed(self.seed, &[10]))?;
        Ok(n)
    }

    pub fn new_generators(&self) -> Result<GeneratorPair<f32>> {
        let mut n = GeneratorPair::new(self.generator)?;
        xavier_init(&mut n, derive_seed(self.seed, &[11]))?;
        Ok(n)
    }

    pub fn new_discriminators(&self) -> Result<DiscriminatorSet<f32>> {
        let mut n = DiscriminatorSet::new(self.discriminator)?;
        xavier_init(&mut n, derive_seed(self.seed, &[12]))?;
        Ok(n)
    }

    pub fn new_enhancement(&self) -> Result<EnhancementNet<f32>> {
        let mut n = EnhancementNet::new("f_e", self.enhancement_net)?;
        xavier_init(&mut n, derive_seed(self.seed, &[13]))?;
        Ok(n)
    }
}

/// Scores `fe` at the input resolution and `fe_sr` at `factor`x on the test
/// frames, with the degraded input and bicubic upsampling as baselines.
pub fn evaluate(
    fe: &EnhancementNet<f32>,
    fe_sr: &EnhancementNet<f32>,
    f_rgb: &GuidanceNet<f32>,
    test: &[&SynthFrame],
    factor: usize,
) -> Result<PipelineMetrics> {
    let mut rows: [Vec<ErrorReport>; 5] = Default::default();
    let mut paired: [Vec<PairedSurface>; 2] = Default::default();
    for f in test {
        let rgb_low = downsample_rgb(&f.rgb, factor)?;
        rows[0].push(masked_error_stats(&f.lq, &f.hq_down, &f.lq)?);
        let enhanced = infer(fe, f_rgb, &rgb_low, &f.lq, 1)?;
        rows[1].push(masked_error_stats(&enhanced, &f.hq_down, &f.lq)?);
        paired[0].push(paired_surface_error(&enhanced, &f.lq, &f.hq_down)?);
        let bicubic = bicubic_upsample(&f.lq, factor)?;
        rows[2].push(masked_error_stats(&bicubic, &f.hq, &bicubic)?);
        rows[3].push(masked_error_stats(&infer(fe, f_rgb, &f.rgb, &f.lq, factor)?, &f.hq, &bicubic)?);
        let sr = infer(fe_sr, f_rgb, &f.rgb, &f.lq, factor)?;
        rows[4].push(masked_error_stats(&sr, &f.hq, &bicubic)?);
        paired[1].push(paired_surface_error(&sr, &bicubic, &f.hq)?);
    }
    let pooled = |i: usize| ErrorReport::pooled(&rows[i]);
    Ok(PipelineMetrics {
        lq: pooled(0)?,
        enhanced: pooled(1)?,
        bicubic: pooled(2)?,
        sr_before: pooled(3)?,
        sr: pooled(4)?,
        enhanced_vs_lq: PairedSurface::pooled(&paired[0]),
        sr_vs_bicubic: PairedSurface::pooled(&paired[1]),
    })
}

/// Generates the synthetic dataset, splits it by scene and runs guidance
/// pre-training, translation, enhancement and 2x fine-tuning, then scores
/// the held-out test scenes. Bit-reproducible for a given config.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineArtifacts> {
    cfg.validate()?;
    let factor = cfg.synth.degradation.downsample;
    let frames = generate_frames(&cfg.synth)?;
    let splits = split_frames(&frames, cfg)?;
    let (set_l, set_h) = unpaired_sets(&splits.a, &splits.b, factor)?;

    let mut f_rgb = cfg.new_guidance()?;
    let guidance_log = train_guidance(&mut f_rgb, &set_l, &set_h, &cfg.guidance)?;
    let rgb_digest = param_digest(&f_rgb);

    let mut gens = cfg.new_generators()?;
    let mut discs = cfg.new_discriminators()?;
    let tr = train_translation(&mut gens, &mut discs, &set_l, &set_h, &cfg.translation)?;
    let gen_digest = param_digest(&gens.h2l);

    let mut fe = cfg.new_enhancement()?;
    let enh = train_enhancement(&mut fe, &gens.h2l, &f_rgb, &set_l, &set_h, &cfg.enhancement)?;

    let (set_l_up, pairs) = sr_sets(&splits.a, &splits.b, factor)?;
    let mut fe_sr = fe.clone();
    let sr = finetune_sr(&mut fe_sr, &gens.h2l, &f_rgb, &set_l_up, &pairs, factor, &cfg.sr)?;

    let metrics = evaluate(&fe, &fe_sr, &f_rgb, &splits.test, factor)?;
    let ckpt = |m: &dyn Module<f32>| encode_checkpoint(m, false);
    Ok(PipelineArtifacts {
        metrics,
        checkpoints: vec![
            ("f_rgb".into(), ckpt(&f_rgb)),
            ("generators".into(), ckpt(&gens)),
            ("discriminators".into(), ckpt(&discs)),
            ("f_e".into(), ckpt(&fe)),
            ("f_e_sr".into(), ckpt(&fe_sr)),
        ],
        logs: vec![
            ("guidance".into(), guidance_log),
            ("translation".into(), tr.log),
            ("enhancement".into(), enh.log),
            ("sr".into(), sr.log),
        ],
        generator_steps: tr.generator_steps,
        discriminator_steps: tr.discriminator_steps,
        frozen_digests: [
            (rgb_digest, param_digest(&f_rgb)),
            (gen_digest, param_digest(&gens.h2l)),
        ],
    })
}
