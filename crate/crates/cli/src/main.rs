use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use depthsr_core::autodiff::{load_checkpoint, save_checkpoint};
use depthsr_core::datagen::{
    build_splits, degrade, generate_frames, read_frame, ssim_patch_filter, write_frames, DatasetManifest,
    DegradationSpec, Split, SynthConfig, SynthFrame,
};
use depthsr_core::depth::{bicubic_upsample, read_depth_png, read_rgb_png, write_depth_png};
use depthsr_core::gradsuite::{gradient_suite, GRAD_TOLERANCE};
use depthsr_core::metrics::{masked_error_stats, ErrorReport};
use depthsr_core::nets::{EnhancementNet, GuidanceNet};
use depthsr_core::training::{
    evaluate, finetune_sr, infer, sr_sets, train_enhancement, train_guidance, train_translation, unpaired_sets,
    PipelineConfig, TrainLog,
};
use depthsr_core::{Error, Result};

const MANIFEST: &str = "manifest.json";
const RUN_CONFIG: &str = "config.json";

#[derive(Parser)]
#[command(name = "depthsr", version, about = "Unpaired depth enhancement and super-resolution")]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed. Selects the built-in micro config when no config file
    /// is given, and overrides its split/initialization seed otherwise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render and degrade a synthetic RGB-D dataset.
    Synth(SynthArgs),
    /// Assign whole scenes to Train A/B, val and test; writes manifest.json.
    Split(SplitArgs),
    /// Apply the synthetic sensor model to one depth PNG.
    Degrade(DegradeArgs),
    /// Keep frames whose low-quality depth is SSIM-consistent with the clean one.
    Filter(FilterArgs),
    /// Bicubic upsampling of one depth PNG.
    Upsample(UpsampleArgs),
    /// Pre-train the RGB guidance network.
    TrainGuidance(TrainArgs),
    /// Train the unpaired translation generators and discriminators.
    TrainTranslate(TrainArgs),
    /// Train the enhancement network on pseudo-examples and real frames.
    TrainEnhance(TrainArgs),
    /// Fine-tune the enhancement network for 2x super-resolution.
    FinetuneSr(TrainArgs),
    /// Enhance or super-resolve one depth map.
    Infer(InferArgs),
    /// Error metrics of a prediction, or of a trained run on the test split.
    Eval(EvalArgs),
    /// Finite-difference gradient checks of every op and loss.
    Gradcheck,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Synthesis config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    downsample: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Pipeline config JSON supplying the split fractions.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Degradation config JSON (default sensor model otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    downsample: Option<usize>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    data: PathBuf,
    /// Minimum SSIM between low-quality and clean depth.
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// Filtered manifest path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UpsampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    factor: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory with manifest.json.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for checkpoints, logs and the resolved config.
    #[arg(long)]
    run: PathBuf,
    /// Pipeline config JSON; defaults to `<run>/config.json`, then to the
    /// built-in micro config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss-weight preset name or JSON path for this phase.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct InferArgs {
    /// Run directory with config.json and checkpoints.
    #[arg(long)]
    run: PathBuf,
    /// RGB frame at the output resolution.
    #[arg(long)]
    rgb: PathBuf,
    /// Low-quality depth PNG.
    #[arg(long)]
    depth: PathBuf,
    #[arg(long, default_value_t = 1)]
    factor: usize,
    /// Enhancement checkpoint (default: f_e.ckpt for factor 1, f_e_sr.ckpt for 2).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, requires_all = ["gt", "input"], conflicts_with_all = ["run", "data"])]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Low-quality input defining the hole/defined partition.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Trained run to score on the test split of `--data`.
    #[arg(long, requires = "data")]
    run: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Print JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 3 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Split(a) => split(a, cli.seed),
        Command::Degrade(a) => degrade_one(a, cli.seed),
        Command::Filter(a) => filter(a),
        Command::Upsample(a) => {
            write_depth_png(&bicubic_upsample(&read_depth_png(&a.input)?, a.factor)?, &a.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainGuidance(a) => phase(a, cli.seed, Phase::Guidance),
        Command::TrainTranslate(a) => phase(a, cli.seed, Phase::Translation),
        Command::TrainEnhance(a) => phase(a, cli.seed, Phase::Enhancement),
        Command::FinetuneSr(a) => phase(a, cli.seed, Phase::Sr),
        Command::Infer(a) => infer_one(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck => gradcheck(cli.seed.unwrap_or(0)),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn as_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn pipeline_config(path: Option<&Path>, run: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let stored = run.map(|r| r.join(RUN_CONFIG)).filter(|p| p.exists());
    let mut cfg = match path.map(Path::to_path_buf).or(stored) {
        Some(p) => {
            let mut c: PipelineConfig = read_json(&p)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            c
        }
        None => PipelineConfig::micro(seed.unwrap_or(0)),
    };
    cfg.synth.degradation.downsample = cfg.synth.degradation.downsample.max(1);
    cfg.validate()?;
    Ok(cfg)
}

fn synth(a: &SynthArgs, seed: Option<u64>) -> Result<ExitCode> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::micro(0).synth,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.scenes = a.scenes.unwrap_or(cfg.scenes);
    cfg.frames_per_scene = a.frames.unwrap_or(cfg.frames_per_scene);
    cfg.width = a.width.unwrap_or(cfg.width);
    cfg.height = a.height.unwrap_or(cfg.height);
    cfg.degradation.downsample = a.downsample.unwrap_or(cfg.degradation.downsample);
    cfg.degradation.validate().map_err(as_config)?;
    let frames = generate_frames(&cfg)?;
    create_dir(&a.out)?;
    write_frames(&a.out, &cfg, &frames)?;
    eprintln!("synth: {} frames in {}", frames.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn split(a: &SplitArgs, seed: Option<u64>) -> Result<ExitCode> {
    let cfg = pipeline_config(a.config.as_deref(), None, seed)?;
    let synth: SynthConfig = read_json(&a.data.join("synth.json"))?;
    let frames = generate_records(&synth);
    let manifest = build_splits(frames, cfg.fractions, cfg.seed)?;
    write_text(&a.data.join(MANIFEST), &manifest.to_json()?)?;
    for s in [Split::TrainA, Split::TrainB, Split::Val, Split::Test] {
        eprintln!("split: {s:?} {} frames", manifest.in_split(s).count());
    }
    Ok(ExitCode::SUCCESS)
}

fn generate_records(cfg: &SynthConfig) -> Vec<depthsr_core::datagen::FrameRecord> {
    use depthsr_core::datagen::{scene_name, FramePaths, FrameRecord};
    (0..cfg.scenes)
        .flat_map(|s| {
            (0..cfg.frames_per_scene).map(move |f| {
                let (scene, frame) = (scene_name(s), format!("{f:04}"));
                FrameRecord {
                    paths: FramePaths::standard(&scene, &frame),
                    scene,
                    frame,
                }
            })
        })
        .collect()
}

fn degrade_one(a: &DegradeArgs, seed: Option<u64>) -> Result<ExitCode> {
    let mut spec: DegradationSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => DegradationSpec::default(),
    };
    spec.downsample = a.downsample.unwrap_or(spec.downsample);
    spec.validate().map_err(as_config)?;
    let out = degrade(&read_depth_png(&a.input)?, &spec, seed.unwrap_or(0))?;
    write_depth_png(&out, &a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn load_manifest(data: &Path) -> Result<DatasetManifest> {
    let path = data.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    DatasetManifest::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

struct Dataset {
    a: Vec<SynthFrame>,
    b: Vec<SynthFrame>,
    test: Vec<SynthFrame>,
    factor: usize,
}

impl Dataset {
    fn load(data: &Path) -> Result<Self> {
        let manifest = load_manifest(data)?;
        let read = |s: Split| -> Result<Vec<SynthFrame>> {
            let entries: Vec<_> = manifest.in_split(s).collect();
            entries.par_iter().map(|e| read_frame(data, &e.record)).collect()
        };
        let (a, b, test) = (read(Split::TrainA)?, read(Split::TrainB)?, read(Split::Test)?);
        let first = a.first().or(b.first()).ok_or_else(|| Error::Empty("no training frames".into()))?;
        let factor = first.hq.width() / first.lq.width().max(1);
        if factor == 0 || first.lq.width() * factor != first.hq.width() {
            return Err(Error::Dimension(format!(
                "hq width {} is not a multiple of lq width {}",
                first.hq.width(),
                first.lq.width()
            )));
        }
        Ok(Self { a, b, test, factor })
    }

    fn refs(v: &[SynthFrame]) -> Vec<&SynthFrame> {
        v.iter().collect()
    }
}

fn filter(a: &FilterArgs) -> Result<ExitCode> {
    let mut manifest = load_manifest(&a.data)?;
    let pairs: Vec<_> = manifest
        .frames
        .par_iter()
        .map(|e| read_frame(&a.data, &e.record).map(|f| (f.lq, f.hq_down)))
        .collect::<Result<_>>()?;
    let kept = ssim_patch_filter(&pairs, a.threshold)?;
    eprintln!("filter: kept {} of {}", kept.len(), pairs.len());
    manifest.frames = kept.into_iter().map(|i| manifest.frames[i].clone()).collect();
    write_text(&a.out, &manifest.to_json()?)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Copy)]
enum Phase {
    Guidance,
    Translation,
    Enhancement,
    Sr,
}

fn load_guidance(run: &Path, cfg: &PipelineConfig) -> Result<GuidanceNet<f32>> {
    let mut n = cfg.new_guidance()?;
    load_checkpoint(&run.join("f_rgb.ckpt"), &mut n)?;
    Ok(n)
}

fn load_enhancement(path: &Path, cfg: &PipelineConfig) -> Result<EnhancementNet<f32>> {
    let mut n = cfg.new_enhancement()?;
    load_checkpoint(path, &mut n)?;
    Ok(n)
}

fn report(name: &str, log: &TrainLog, run: &Path) -> Result<()> {
    log.write_csv(&run.join(format!("{name}.csv")))?;
    let last = log.rows.last().map(|r| format!("{:?}", r.2)).unwrap_or_default();
    eprintln!("{name}: last window {last}");
    Ok(())
}

fn phase(a: &TrainArgs, seed: Option<u64>, which: Phase) -> Result<ExitCode> {
    let mut cfg = pipeline_config(a.config.as_deref(), Some(&a.run), seed)?;
    if let Some(p) = &a.preset {
        match which {
            Phase::Guidance => cfg.guidance.preset = p.clone(),
            Phase::Translation => cfg.translation.preset = p.clone(),
            Phase::Enhancement => cfg.enhancement.preset = p.clone(),
            Phase::Sr => cfg.sr.preset = p.clone(),
        }
    }
    create_dir(&a.run)?;
    write_text(&a.run.join(RUN_CONFIG), &serde_json::to_string_pretty(&cfg)?)?;
    let data = Dataset::load(&a.data)?;
    let (sa, sb) = (Dataset::refs(&data.a), Dataset::refs(&data.b));
    let (set_l, set_h) = unpaired_sets(&sa, &sb, data.factor)?;
    match which {
        Phase::Guidance => {
            let mut f_rgb = cfg.new_guidance()?;
            let log = train_guidance(&mut f_rgb, &set_l, &set_h, &cfg.guidance)?;
            save_checkpoint(&a.run.join("f_rgb.ckpt"), &f_rgb, false)?;
            report("guidance", &log, &a.run)?;
        }
        Phase::Translation => {
            let (mut gens, mut discs) = (cfg.new_generators()?, cfg.new_discriminators()?);
            let r = train_translation(&mut gens, &mut discs, &set_l, &set_h, &cfg.translation)?;
            save_checkpoint(&a.run.join("generators.ckpt"), &gens, false)?;
            save_checkpoint(&a.run.join("discriminators.ckpt"), &discs, false)?;
            eprintln!("translation: {} generator and {} discriminator steps", r.generator_steps, r.discriminator_steps);
            report("translation", &r.log, &a.run)?;
        }
        Phase::Enhancement | Phase::Sr => {
            let f_rgb = load_guidance(&a.run, &cfg)?;
            let mut gens = cfg.new_generators()?;
            load_checkpoint(&a.run.join("generators.ckpt"), &mut gens)?;
            if let Phase::Enhancement = which {
                let mut fe = cfg.new_enhancement()?;
                let r = train_enhancement(&mut fe, &gens.h2l, &f_rgb, &set_l, &set_h, &cfg.enhancement)?;
                save_checkpoint(&a.run.join("f_e.ckpt"), &fe, false)?;
                eprintln!("enhancement: holes applied to {} of {} samples", r.hole_applied, r.hole_draws);
                report("enhancement", &r.log, &a.run)?;
            } else {
                let mut fe = load_enhancement(&a.run.join("f_e.ckpt"), &cfg)?;
                let (up, pairs) = sr_sets(&sa, &sb, data.factor)?;
                let r = finetune_sr(&mut fe, &gens.h2l, &f_rgb, &up, &pairs, data.factor, &cfg.sr)?;
                save_checkpoint(&a.run.join("f_e_sr.ckpt"), &fe, false)?;
                report("sr", &r.log, &a.run)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn infer_one(a: &InferArgs) -> Result<ExitCode> {
    let cfg = pipeline_config(None, Some(&a.run), None)?;
    let f_rgb = load_guidance(&a.run, &cfg)?;
    let default = if a.factor == 1 { "f_e.ckpt" } else { "f_e_sr.ckpt" };
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| a.run.join(default));
    let fe = load_enhancement(&ckpt, &cfg)?;
    let out = infer(&fe, &f_rgb, &read_rgb_png(&a.rgb)?, &read_depth_png(&a.depth)?, a.factor)?;
    write_depth_png(&out, &a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn eval(a: &EvalArgs) -> Result<ExitCode> {
    if let (Some(pred), Some(gt), Some(input)) = (&a.pred, &a.gt, &a.input) {
        let r = masked_error_stats(&read_depth_png(pred)?, &read_depth_png(gt)?, &read_depth_png(input)?)?;
        if a.json {
            println!("{}", serde_json::to_string_pretty(&r)?);
        } else {
            println!("{}\n{}", ErrorReport::CSV_HEADER, r.csv_row());
        }
        return Ok(ExitCode::SUCCESS);
    }
    let (Some(run), Some(data)) = (&a.run, &a.data) else {
        return Err(Error::Config("eval needs --pred/--gt/--input or --run/--data".into()));
    };
    let cfg = pipeline_config(None, Some(run), None)?;
    let f_rgb = load_guidance(run, &cfg)?;
    let fe = load_enhancement(&run.join("f_e.ckpt"), &cfg)?;
    let fe_sr = load_enhancement(&run.join("f_e_sr.ckpt"), &cfg)?;
    let ds = Dataset::load(data)?;
    let m = evaluate(&fe, &fe_sr, &f_rgb, &Dataset::refs(&ds.test), ds.factor)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&m)?);
    } else {
        print!("{}", m.to_csv());
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(seed: u64) -> Result<ExitCode> {
    let suite = gradient_suite(seed)?;
    let mut ok = true;
    for e in &suite {
        ok &= e.passed();
        println!(
            "{:<26} max_rel_error {:.3e} checked {} {}",
            e.name,
            e.report.max_rel_error,
            e.report.checked,
            if e.passed() { "ok" } else { "FAIL" }
        );
    }
    let worst = suite.iter().map(|e| e.report.max_rel_error).fold(0.0, f64::max);
    println!("{} checks, worst {worst:.3e}, tolerance {GRAD_TOLERANCE:e}", suite.len());
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
