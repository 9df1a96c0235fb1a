//! Finite-difference gradient checks over every autodiff op and loss term,
//! runnable outside the test harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{gradient_check, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use crate::losses::{
    boundary_loss, cycle_loss, depth_loss, enhancement_pseudo_loss, enhancement_self_loss, identity_loss, lsgan_loss,
    masked_l1, perceptual_surface_loss, range_loss, smoothness_loss, surface_normals, uniform_mse_v, GanSide,
    LossWeights, Term,
};
use crate::Result;

/// Largest accepted relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.checked > 0 && self.report.max_rel_error <= GRAD_TOLERANCE
    }
}

type Check = for<'t> fn(&'t Tape<f64>, &[Var<'t, f64>], &Fixtures) -> Result<Var<'t, f64>>;

/// Constant tensors shared by the checks.
struct Fixtures {
    input: Tensor<f64>,
    rgb: Tensor<f64>,
    weights: Tensor<f64>,
    loss: LossWeights,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape matches")
}

fn with_holes(mut t: Tensor<f64>, every: usize) -> Tensor<f64> {
    t.data_mut().iter_mut().step_by(every).for_each(|v| *v = 0.0);
    t
}

/// Weighted sum with fixed weights so each output element counts differently.
fn weigh<'t>(y: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let n = y.value().numel();
    let w = Tensor::new(y.shape(), (0..n).map(|i| (i as f64 * 0.77).sin()).collect())?;
    Ok(y.mul_const(&w)?.sum())
}

const MAP: &[usize] = &[2, 1, 5, 6];
const FEAT: &[usize] = &[2, 3, 4, 4];
const PAIR: &[(&[usize], f64, f64)] = &[(MAP, 0.2, 0.9), (MAP, 0.2, 0.9)];

#[rustfmt::skip]
fn checks() -> Vec<(&'static str, Vec<(&'static [usize], f64, f64)>, Check)> {
    let f = |lo, hi| vec![(FEAT, lo, hi)];
    let m2 = PAIR.to_vec();
    vec![
        ("neg", f(-1.0, 1.0), |_, v, _| weigh(v[0].neg())),
        ("abs", f(-1.0, 1.0), |_, v, _| weigh(v[0].abs())),
        ("exp", f(-1.0, 1.0), |_, v, _| weigh(v[0].exp())),
        ("ln", f(0.1, 2.0), |_, v, _| weigh(v[0].ln())),
        ("square", f(-1.0, 1.0), |_, v, _| weigh(v[0].square())),
        ("sqrt", f(0.1, 2.0), |_, v, _| weigh(v[0].sqrt())),
        ("relu", f(-1.0, 1.0), |_, v, _| weigh(v[0].relu())),
        ("leaky_relu", f(-1.0, 1.0), |_, v, _| weigh(v[0].leaky_relu(0.2))),
        ("tanh", f(-2.0, 2.0), |_, v, _| weigh(v[0].tanh())),
        ("sigmoid", f(-3.0, 3.0), |_, v, _| weigh(v[0].sigmoid())),
        ("clamp", f(-1.0, 1.0), |_, v, _| weigh(v[0].clamp(-0.5, 0.5))),
        ("logit", f(0.05, 0.95), |_, v, _| weigh(v[0].logit(1e-6))),
        ("scale_add", f(-1.0, 1.0), |_, v, _| weigh(v[0].scale(2.5).add_scalar(0.3))),
        ("mean", f(-1.0, 1.0), |_, v, _| Ok(v[0].square().mean())),
        ("up_down_sample", f(-1.0, 1.0), |_, v, _| weigh(v[0].upsample2x()?.square().downsample2x()?)),
        ("diff_h", f(-1.0, 1.0), |_, v, _| weigh(v[0].diff_h()?)),
        ("diff_v", f(-1.0, 1.0), |_, v, _| weigh(v[0].diff_v()?)),
        ("binary", vec![(FEAT, -1.0, 1.0), (FEAT, 0.5, 1.5)], |_, v, _| {
            let p = v[0].add(v[1])?.mul(v[0].sub(v[1])?)?;
            weigh(p.div(v[1])?)
        }),
        ("scale_by", vec![(FEAT, -1.0, 1.0), (&[1], -1.0, 1.0)], |_, v, _| weigh(v[0].scale_by(v[1])?)),
        ("concat_slice_expand", vec![(FEAT, -1.0, 1.0), (&[2, 1, 4, 4], -1.0, 1.0)], |_, v, _| {
            let cat = Var::concat_channels(&[v[0], v[1]])?.slice(1, 1, 3)?.slice(3, 1, 2)?;
            weigh(cat.mul(v[1].expand_channels(3)?.slice(3, 0, 2)?)?)
        }),
        ("mul_const", f(-1.0, 1.0), |_, v, fx| Ok(v[0].mul_const(&fx.weights)?.sum())),
        ("conv2d_k3_s1", vec![(FEAT, -1.0, 1.0), (&[2, 3, 3, 3], -1.0, 1.0), (&[2], -1.0, 1.0)], |_, v, _| {
            weigh(v[0].conv2d(v[1], Some(v[2]), 1, 1)?)
        }),
        ("conv2d_k4_s2", vec![(FEAT, -1.0, 1.0), (&[2, 3, 4, 4], -1.0, 1.0)], |_, v, _| {
            weigh(v[0].conv2d(v[1], None, 2, 1)?)
        }),
        ("group_norm", vec![(FEAT, -1.0, 1.0), (&[3], 0.5, 1.5), (&[3], -1.0, 1.0)], |_, v, _| {
            weigh(v[0].group_norm(3, v[1], v[2])?)
        }),
        ("instance_norm", vec![(FEAT, -1.0, 1.0), (&[3], 0.5, 1.5), (&[3], -1.0, 1.0)], |_, v, _| {
            weigh(v[0].instance_norm(v[1], v[2])?)
        }),
        ("surface_normals", vec![(MAP, 0.2, 0.9)], |_, v, _| weigh(surface_normals(v[0])?.value)),
        ("masked_l1", m2.clone(), |_, v, fx| masked_l1(v[0], v[1], &fx.input)),
        ("depth_loss", m2.clone(), |_, v, fx| {
            depth_loss(v[0], v[1], &fx.input, &Term::new(15.0, 1.0, 30.0), &Term::new(10.0, 0.0, 20.0))
        }),
        ("perceptual_surface_loss", m2.clone(), |_, v, fx| {
            perceptual_surface_loss(v[0], v[1], &fx.input, &Term::new(3.0, 1.0, 5.0), &Term::new(3.0, 1.0, 5.0))
        }),
        ("boundary_loss", vec![(MAP, 0.2, 0.9)], |_, v, fx| boundary_loss(v[0], &fx.rgb)),
        ("smoothness_loss", vec![(MAP, 0.2, 0.9)], |_, v, _| smoothness_loss(surface_normals(v[0])?.value)),
        ("uniform_mse_v", m2.clone(), |_, v, _| uniform_mse_v(v[0], v[1])),
        ("cycle_loss", m2.clone(), |_, v, _| cycle_loss(v[0], v[1])),
        ("range_loss", vec![(MAP, 0.2, 0.9); 4], |_, v, _| range_loss(v[0], v[1], v[2], v[3], 2.0, 1.0)),
        ("identity_loss", m2.clone(), |_, v, _| identity_loss(v[0], v[1], 1.0)),
        ("lsgan_discriminator", vec![(&[2, 1, 3, 3], -1.0, 2.0); 2], |_, v, _| {
            lsgan_loss(Some(v[0]), v[1], GanSide::Discriminator)
        }),
        ("lsgan_generator", vec![(&[2, 1, 3, 3], -1.0, 2.0)], |_, v, _| lsgan_loss(None, v[0], GanSide::Generator)),
        ("enhancement_pseudo_loss", m2.clone(), |_, v, fx| {
            enhancement_pseudo_loss(v[0], v[1], &fx.input, &fx.loss.high)
        }),
        ("enhancement_self_loss", m2, |_, v, fx| {
            enhancement_self_loss(v[0], v[1], &fx.input, &fx.rgb, &fx.loss.low)
        }),
    ]
}

/// Runs every check in double precision with seeded random inputs.
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loss = LossWeights::resolve("scannet-renderscannet-phase1")?;
    // Preset smoothness weights are too small for the check to see.
    loss.high.smooth = 0.1;
    loss.low.smooth = 0.1;
    let fx = Fixtures {
        input: with_holes(random(&mut rng, MAP, 0.2, 0.9), 4),
        rgb: random(&mut rng, &[2, 3, 5, 6], 0.0, 1.0),
        weights: random(&mut rng, FEAT, -1.0, 1.0),
        loss,
    };
    let opts = GradCheckOptions::default();
    checks()
        .into_iter()
        .map(|(name, shapes, f)| {
            let inputs: Vec<Tensor<f64>> = shapes.iter().map(|(s, lo, hi)| random(&mut rng, s, *lo, *hi)).collect();
            let report = gradient_check(|t, v| f(t, v, &fx), &inputs, &opts)?;
            Ok(SuiteEntry { name, report })
        })
        .collect()
}
