use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{gradient_check, GradCheckOptions, Tape};
use crate::depth::{DepthMap, MAX_DEPTH_MM};
use crate::metrics::perceptual_metric;
use crate::nets::{xavier_init, DiscriminatorConfig, DiscriminatorSet, GeneratorConfig, GeneratorPair};

const GRAD_TOL: f64 = 1e-4;

fn rand_tensor(shape: [usize; 4], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_f64(shape, &data).unwrap()
}

fn with_holes(mut t: Tensor<f64>, every: usize) -> Tensor<f64> {
    t.data_mut().iter_mut().step_by(every).for_each(|v| *v = 0.0);
    t
}

fn check(f: impl for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>, inputs: &[Tensor<f64>]) {
    let r = gradient_check(f, inputs, &GradCheckOptions::default()).unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error <= GRAD_TOL, "{r:?}");
}

fn eval(f: impl for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>, inputs: &[Tensor<f64>]) -> f64 {
    let tape = Tape::no_grad();
    let vars: Vec<_> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    f(&tape, &vars).unwrap().item()
}

/// Normals of one `[1, 1, H, W]` map by direct formula.
fn oracle_normals(t: &Tensor<f64>) -> Vec<Option<[f64; 3]>> {
    let (h, w) = (t.shape()[2], t.shape()[3]);
    let d = t.data();
    let mut out = Vec::new();
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let (z, zr, zd) = (d[y * w + x], d[y * w + x + 1], d[(y + 1) * w + x]);
            if z > 0.0 && zr > 0.0 && zd > 0.0 {
                let (zx, zy) = (zr - z, zd - z);
                let n = (zx * zx + zy * zy + 1.0).sqrt();
                out.push(Some([-zx / n, -zy / n, 1.0 / n]));
            } else {
                out.push(None);
            }
        }
    }
    out
}

#[test]
fn normals_match_direct_formula() {
    let d = with_holes(rand_tensor([1, 1, 5, 6], 0.2, 0.9, 1), 7);
    let tape = Tape::new();
    let n = surface_normals(tape.input(d.clone())).unwrap();
    let v = n.value.value();
    let plane = 4 * 5;
    for (i, o) in oracle_normals(&d).into_iter().enumerate() {
        assert_eq!(n.valid.data()[i] > 0.0, o.is_some());
        if let Some(o) = o {
            for c in 0..3 {
                assert!((v.data()[c * plane + i] - o[c]).abs() < 1e-12);
            }
        }
    }
    assert!(surface_normals(tape.input(Tensor::<f64>::zeros([1, 1, 1, 4]))).is_err());
}

#[test]
fn depth_loss_cases() {
    let t = rand_tensor([2, 1, 4, 5], 0.2, 0.8, 2);
    let f = |c: f64, w: Term, w2: Term| {
        let shifted = t.map(|v| v + c);
        eval(|_, v| depth_loss(v[0], v[1], &t, &w, &w2), &[shifted, t.clone()])
    };
    assert_eq!(f(0.0, Term::new(3.0, 1.0, 9.0), Term::new(2.0, 0.0, 5.0)), 0.0);
    assert!((f(0.07, Term::new(1.0, 1.0, 1.0), Term::OFF) - 0.07).abs() < 1e-12);
    // the squared term with uniform weights is the MSE
    assert!((f(0.05, Term::OFF, Term::new(1.0, 1.0, 1.0)) - 0.0025).abs() < 1e-12);
    let a = t.clone();
    assert!(eval(|_, v| depth_loss(v[0], v[1], &a, &Term::OFF, &Term::OFF), &[t.clone(), t.map(|v| v * 0.5)]) == 0.0);
}

#[test]
fn depth_loss_weights_follow_input_holes() {
    let target = Tensor::from_f64([1, 1, 1, 4], &[0.5; 4]).unwrap();
    let input = Tensor::from_f64([1, 1, 1, 4], &[0.5, 0.0, 0.5, 0.5]).unwrap();
    let pred = target.map(|v| v + 0.1);
    let got = eval(|_, v| depth_loss(v[0], v[1], &input, &Term::new(1.0, 1.0, 30.0), &Term::OFF), &[pred, target]);
    assert!((got - 0.1 * 33.0 / 4.0).abs() < 1e-12);
}

#[test]
fn depth_loss_gradient() {
    let input = with_holes(rand_tensor([2, 1, 4, 4], 0.2, 0.8, 3), 3);
    let w1 = Term::new(15.0, 1.0, 30.0);
    let w2 = Term::new(10.0, 0.0, 20.0);
    check(
        |_, v| depth_loss(v[0], v[1], &input, &w1, &w2),
        &[rand_tensor([2, 1, 4, 4], 0.2, 0.8, 4), rand_tensor([2, 1, 4, 4], 0.2, 0.8, 5)],
    );
}

#[test]
fn surface_loss_mse_term_is_third_of_weighted_normal_error() {
    for seed in 0..10 {
        let pred = rand_tensor([1, 1, 6, 7], 0.2, 0.8, 10 + seed);
        let target = rand_tensor([1, 1, 6, 7], 0.2, 0.8, 30 + seed);
        let input = with_holes(target.clone(), 4);
        let mask = WeightMask { weight_defined: 1.0, weight_hole: 5.0 };
        let t2 = Term { lambda: 1.0, mask };
        let got = eval(|_, v| perceptual_surface_loss(v[0], v[1], &input, &Term::OFF, &t2), &[pred.clone(), target.clone()]);

        let (np, nt) = (oracle_normals(&pred), oracle_normals(&target));
        let mut acc = 0.0;
        for (i, (a, b)) in np.iter().zip(&nt).enumerate() {
            let (y, x) = (i / 6, i % 6);
            let wt = if input.data()[y * 7 + x] > 0.0 { 1.0 } else { 5.0 };
            let (a, b) = (a.unwrap(), b.unwrap());
            acc += wt * (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
        }
        let oracle = acc / np.len() as f64 / 3.0;
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }
}

#[test]
fn surface_loss_agrees_with_metric_on_complete_maps() {
    let pred = rand_tensor([1, 1, 6, 8], 0.2, 0.9, 7);
    let target = rand_tensor([1, 1, 6, 8], 0.2, 0.9, 8);
    let uni = Term::new(1.0, 1.0, 1.0);
    let l1 = eval(|_, v| perceptual_surface_loss(v[0], v[1], &target, &uni, &Term::OFF), &[pred.clone(), target.clone()]);
    let l2 = eval(|_, v| perceptual_surface_loss(v[0], v[1], &target, &Term::OFF, &uni), &[pred.clone(), target.clone()]);
    let as_map = |t: &Tensor<f64>| DepthMap::new(8, 6, t.data().iter().map(|v| v * MAX_DEPTH_MM).collect()).unwrap();
    assert!((l1 - perceptual_metric(&as_map(&pred), &as_map(&target), 1).unwrap()).abs() < 1e-12);
    assert!((l2 - perceptual_metric(&as_map(&pred), &as_map(&target), 2).unwrap()).abs() < 1e-12);
    assert_eq!(eval(|_, v| perceptual_surface_loss(v[0], v[1], &target, &uni, &uni), &[target.clone(), target.clone()]), 0.0);
    let tiny = Tensor::<f64>::full([1, 1, 1, 5], 0.5);
    let tape = Tape::new();
    assert!(perceptual_surface_loss(tape.input(tiny.clone()), tape.input(tiny.clone()), &tiny, &uni, &uni).is_err());
}

#[test]
fn surface_loss_gradient() {
    let target = rand_tensor([2, 1, 4, 5], 0.2, 0.8, 9);
    let input = with_holes(target.clone(), 3);
    let (t1, t2) = (Term::new(3.0, 1.0, 5.0), Term::new(3.0, 1.0, 5.0));
    check(
        |_, v| perceptual_surface_loss(v[0], v[1], &input, &t1, &t2),
        &[rand_tensor([2, 1, 4, 5], 0.2, 0.8, 10), target.clone()],
    );
}

fn rgb_constant(shape: [usize; 4]) -> Tensor<f64> {
    Tensor::full([shape[0], 3, shape[2], shape[3]], 0.4)
}

#[test]
fn boundary_loss_cases() {
    let rgb = rand_tensor([1, 3, 5, 6], 0.0, 1.0, 11);
    let flat = Tensor::full([1, 1, 5, 6], 0.3);
    assert_eq!(eval(|_, v| boundary_loss(v[0], &rgb), &[flat]), 0.0);
    let s = 0.02;
    let ramp = Tensor::from_f64([1, 1, 5, 6], &(0..30).map(|i| 0.2 + s * (i % 6) as f64).collect::<Vec<_>>()).unwrap();
    let got = eval(|_, v| boundary_loss(v[0], &rgb_constant([1, 1, 5, 6])), &[ramp]);
    assert!((got - s).abs() < 1e-12);
    let gray = luminance(&Tensor::<f64>::from_f64([1, 3, 1, 1], &[1.0, 0.5, 0.0]).unwrap()).unwrap();
    assert!((gray.data()[0] - (0.299 + 0.5 * 0.587)).abs() < 1e-15);
}

#[test]
fn boundary_loss_gradient() {
    let rgb = rand_tensor([2, 3, 4, 5], 0.0, 1.0, 12);
    check(|_, v| boundary_loss(v[0], &rgb), &[rand_tensor([2, 1, 4, 5], 0.2, 0.8, 13)]);
}

#[test]
fn smoothness_cases() {
    let tape = Tape::<f64>::new();
    let plane = Tensor::from_f64([1, 1, 5, 5], &(0..25).map(|i| 0.25 + 0.0625 * (i / 5) as f64 + 0.125 * (i % 5) as f64).collect::<Vec<_>>()).unwrap();
    let n = surface_normals(tape.input(plane)).unwrap();
    assert_eq!(smoothness_loss(n.value).unwrap().item(), 0.0);
    // one channel steps by h between columns 1 and 2 on every one of 4 rows
    let h = 0.3;
    let mut field = vec![0.0; 3 * 16];
    for y in 0..4 {
        for x in 2..4 {
            field[y * 4 + x] = h;
        }
    }
    let got = smoothness_loss(tape.input(Tensor::from_f64([1, 3, 4, 4], &field).unwrap())).unwrap().item();
    let expected = 2.0 * h;
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn smoothness_gradient() {
    check(
        |_, v| smoothness_loss(surface_normals(v[0])?.value),
        &[rand_tensor([1, 1, 5, 5], 0.2, 0.8, 14)],
    );
}

#[test]
fn cycle_loss_cases() {
    let d = rand_tensor([2, 1, 5, 5], 0.2, 0.8, 15);
    assert_eq!(eval(|_, v| cycle_loss(v[0], v[1]), &[d.clone(), d.clone()]), 0.0);
    let got = eval(|_, v| cycle_loss(v[0], v[1]), &[d.clone(), d.map(|v| v + 0.04)]);
    assert!((got - 0.04).abs() < 1e-12);
    check(|_, v| cycle_loss(v[0], v[1]), &[d.clone(), rand_tensor([2, 1, 5, 5], 0.2, 0.8, 16)]);
}

#[test]
fn range_loss_cases() {
    let dl = with_holes(rand_tensor([1, 1, 4, 4], 0.2, 0.8, 17), 4);
    let dh = rand_tensor([1, 1, 4, 4], 0.2, 0.8, 18);
    let f = |enh: &Tensor<f64>, deg: &Tensor<f64>, ll, lh| {
        eval(|_, v| range_loss(v[0], v[1], v[2], v[3], ll, lh), &[dl.clone(), enh.clone(), dh.clone(), deg.clone()])
    };
    assert_eq!(f(&dl.map(|v| if v == 0.0 { 0.5 } else { v }), &dh, 2.0, 1.0), 0.0);
    // change half of the defined pixels by 0.1
    let mut enh = dl.clone();
    let mut changed = 0;
    for v in enh.data_mut().iter_mut() {
        if *v > 0.0 && changed < 6 {
            *v += 0.1;
            changed += 1;
        }
    }
    assert_eq!(dl.data().iter().filter(|&&v| v > 0.0).count(), 12);
    assert!((f(&enh, &dh, 2.0, 0.0) - 2.0 * 0.05).abs() < 1e-12);
    // generated holes are not counted as changes
    let mut deg = dh.clone();
    deg.data_mut()[..8].fill(0.0);
    assert_eq!(f(&dl, &deg, 0.0, 1.0), 0.0);
    // hole pixels are data, not variables: perturbing them changes the mask
    check(
        |t, v| range_loss(t.constant(dl.clone()), v[0], v[1], v[2], 2.0, 1.0),
        &[rand_tensor([1, 1, 4, 4], 0.2, 0.8, 19), dh.clone(), rand_tensor([1, 1, 4, 4], 0.2, 0.8, 20)],
    );
}

#[test]
fn identity_loss_cases() {
    let d = with_holes(rand_tensor([1, 1, 4, 4], 0.2, 0.8, 21), 5);
    assert_eq!(eval(|_, v| identity_loss(v[0], v[1], 1.0), &[d.clone(), d.clone()]), 0.0);
    let got = eval(|_, v| identity_loss(v[0], v[1], 3.0), &[d.map(|v| v + 0.02), d.clone()]);
    assert!((got - 0.06).abs() < 1e-12);
    check(|t, v| identity_loss(v[0], t.constant(d.clone()), 1.5), &[rand_tensor([1, 1, 4, 4], 0.2, 0.8, 22)]);
}

#[test]
fn lsgan_cases() {
    let ones = Tensor::<f64>::full([1, 1, 4, 4], 1.0);
    let zeros = Tensor::<f64>::zeros([1, 1, 4, 4]);
    let half = Tensor::<f64>::full([1, 1, 4, 4], 0.5);
    let d = |r: &Tensor<f64>, f: &Tensor<f64>| {
        eval(|_, v| lsgan_loss(Some(v[0]), v[1], GanSide::Discriminator), &[r.clone(), f.clone()])
    };
    let g = |f: &Tensor<f64>| eval(|_, v| lsgan_loss(None, v[0], GanSide::Generator), &[f.clone()]);
    assert_eq!(d(&ones, &zeros), 0.0);
    assert_eq!(g(&ones), 0.0);
    assert!((d(&half, &half) - 0.25).abs() < 1e-15);
    let tape = Tape::<f64>::new();
    assert!(lsgan_loss(None, tape.input(half.clone()), GanSide::Discriminator).is_err());
    check(
        |_, v| lsgan_loss(Some(v[0]), v[1], GanSide::Discriminator)?.add(lsgan_loss(None, v[1], GanSide::Generator)?),
        &[rand_tensor([1, 1, 3, 3], -1.0, 2.0, 23), rand_tensor([1, 1, 3, 3], -1.0, 2.0, 24)],
    );
}

fn micro_translation() -> (GeneratorPair<f64>, DiscriminatorSet<f64>) {
    let gc = GeneratorConfig { width: 8, res_blocks: 1, groups: 2, ..GeneratorConfig::default() };
    let mut gens = GeneratorPair::new(gc).unwrap();
    xavier_init(&mut gens, 1).unwrap();
    let mut discs = DiscriminatorSet::new(DiscriminatorConfig { width: 4, ..DiscriminatorConfig::default() }).unwrap();
    xavier_init(&mut discs, 2).unwrap();
    discs.update_spectral(1).unwrap();
    (gens, discs)
}

fn micro_batch(seed: u64) -> TranslationBatch<f64> {
    TranslationBatch {
        rgb_l: rand_tensor([2, 3, 8, 8], 0.0, 1.0, seed),
        d_l: with_holes(rand_tensor([2, 1, 8, 8], 0.2, 0.8, seed + 1), 9),
        rgb_h: rand_tensor([2, 3, 8, 8], 0.0, 1.0, seed + 2),
        d_h: rand_tensor([2, 1, 8, 8], 0.2, 0.8, seed + 3),
    }
}

#[test]
fn translation_total_combines_published_weights() {
    let (gens, discs) = micro_translation();
    let batch = micro_batch(30);
    let w = LossWeights::preset("scannet-renderscannet-phase1").unwrap();
    let unit = LossWeights { cycle_h: 1.0, range_l: 1.0, range_h: 0.0, idt_h: 1.0, ..w.clone() };
    let unit_h = LossWeights { range_l: 0.0, range_h: 1.0, ..unit.clone() };
    let tape = Tape::no_grad();
    let full = translation_total_loss(&tape, &batch, &gens, &discs, &w).unwrap();
    let a = translation_total_loss(&tape, &batch, &gens, &discs, &unit).unwrap();
    let b = translation_total_loss(&tape, &batch, &gens, &discs, &unit_h).unwrap();
    let adv: f64 = a.adversarial.iter().map(|v| v.item()).sum();
    let (range_l, range_h) = (a.range.item(), b.range.item());
    let hand = 5.0 * a.cycle.item() + 2.0 * range_l + 1.0 * range_h + 1.0 * a.identity.item() + adv;
    assert!((full.total.item() - hand).abs() < 1e-12);
    // identity warm start: reconstruction matches the input up to the logit clamp
    assert!(a.cycle.item() < 1e-9, "{}", a.cycle.item());
    assert!(full.total.item().is_finite());
}

#[test]
fn translation_non_adversarial_gradient() {
    // as a function of the generator outputs
    check(
        |t, v| {
            let d_l = t.constant(with_holes(rand_tensor([1, 1, 4, 4], 0.2, 0.8, 40), 5));
            let cycle = cycle_loss(v[1], v[3])?.scale(5.0);
            let range = range_loss(d_l, v[0], v[1], v[2], 2.0, 1.0)?;
            cycle.add(range)?.add(identity_loss(v[4], v[1], 1.0)?)
        },
        &[
            rand_tensor([1, 1, 4, 4], 0.2, 0.8, 41),
            rand_tensor([1, 1, 4, 4], 0.2, 0.8, 42),
            rand_tensor([1, 1, 4, 4], 0.2, 0.8, 43),
            rand_tensor([1, 1, 4, 4], 0.2, 0.8, 44),
            rand_tensor([1, 1, 4, 4], 0.2, 0.8, 45),
        ],
    );
}

#[test]
fn discriminator_side_uses_reconstruction_as_real() {
    let (gens, discs) = micro_translation();
    let batch = micro_batch(50);
    let w = LossWeights::preset("scannet-renderscannet-phase1").unwrap();
    let tape = Tape::no_grad();
    let terms = translation_total_loss(&tape, &batch, &gens, &discs, &w).unwrap();
    let (total, parts) = translation_discriminator_loss(&tape, &batch, &terms.outputs, &discs).unwrap();
    let tape2 = Tape::no_grad();
    let real = discs.high_depth.forward(&tape2, tape2.input(terms.outputs.d_h_rec.clone())).unwrap();
    let fake = discs.high_depth.forward(&tape2, tape2.input(terms.outputs.d_l_enh.clone())).unwrap();
    let expected = lsgan_loss(Some(real), fake, GanSide::Discriminator).unwrap().item();
    assert!((parts[2].item() - expected).abs() < 1e-12);
    let sum: f64 = parts.iter().map(|p| p.item()).sum();
    assert!((total.item() - sum).abs() < 1e-12);
}

#[test]
fn enhancement_losses_combine_published_weights() {
    let w = LossWeights::preset("scannet-renderscannet-phase1").unwrap();
    let gt = rand_tensor([1, 1, 6, 6], 0.3, 0.7, 60);
    let input = with_holes(gt.clone(), 4);
    let pred = rand_tensor([1, 1, 6, 6], 0.3, 0.7, 61);
    let rgb = rand_tensor([1, 3, 6, 6], 0.0, 1.0, 62);
    let x = [pred.clone(), gt.clone()];
    let hw = w.high;
    let pseudo = eval(|_, v| enhancement_pseudo_loss(v[0], v[1], &input, &hw), &x);
    let hand = 15.0 * eval(|_, v| depth_loss(v[0], v[1], &input, &Term::new(1.0, 1.0, 30.0), &Term::OFF), &x)
        + 10.0 * eval(|_, v| depth_loss(v[0], v[1], &input, &Term::OFF, &Term::new(1.0, 0.0, 20.0)), &x)
        + 3.0 * eval(|_, v| perceptual_surface_loss(v[0], v[1], &input, &Term::new(1.0, 1.0, 5.0), &Term::OFF), &x)
        + 3.0 * eval(|_, v| perceptual_surface_loss(v[0], v[1], &input, &Term::OFF, &Term::new(1.0, 1.0, 5.0)), &x)
        + 2e-7 * eval(|_, v| smoothness_loss(surface_normals(v[0])?.value), &x);
    assert!((pseudo - hand).abs() < 1e-12);

    let lw = w.low;
    let own = eval(|_, v| enhancement_self_loss(v[0], v[1], &input, &rgb, &lw), &x);
    let hand = 40.0 * eval(|_, v| depth_loss(v[0], v[1], &input, &Term::new(1.0, 1.0, 40.0), &Term::OFF), &x)
        + 20.0 * eval(|_, v| depth_loss(v[0], v[1], &input, &Term::OFF, &Term::new(1.0, 0.0, 20.0)), &x)
        + eval(|_, v| boundary_loss(v[0], &rgb), &x)
        + 2e-7 * eval(|_, v| smoothness_loss(surface_normals(v[0])?.value), &x);
    assert!((own - hand).abs() < 1e-12);
}

#[test]
fn enhancement_losses_vanish_on_flat_identity() {
    let w = LossWeights::preset("scannet-renderscannet-phase1").unwrap();
    let flat = Tensor::full([1, 1, 6, 6], 0.5);
    let x = [flat.clone(), flat.clone()];
    let (hw, lw) = (w.high, w.low);
    assert!(eval(|_, v| enhancement_pseudo_loss(v[0], v[1], &flat, &hw), &x) < 1e-5);
    let rgb = rgb_constant([1, 1, 6, 6]);
    assert!(eval(|_, v| enhancement_self_loss(v[0], v[1], &flat, &rgb, &lw), &x) < 1e-5);
}

#[test]
fn enhancement_loss_gradients() {
    let w = LossWeights::preset("scannet-renderscannet-phase2").unwrap();
    let gt = rand_tensor([1, 1, 5, 5], 0.3, 0.7, 70);
    let input = with_holes(gt.clone(), 3);
    let rgb = rand_tensor([1, 3, 5, 5], 0.0, 1.0, 71);
    let (hw, lw) = (w.high, w.low);
    check(|_, v| enhancement_pseudo_loss(v[0], v[1], &input, &hw), &[rand_tensor([1, 1, 5, 5], 0.3, 0.7, 72), gt.clone()]);
    check(
        |_, v| enhancement_self_loss(v[0], v[1], &input, &rgb, &lw),
        &[rand_tensor([1, 1, 5, 5], 0.3, 0.7, 73), gt.clone()],
    );
}

/// Swaps the two batch items.
fn swap_batch(t: &Tensor<f64>) -> Tensor<f64> {
    let half = t.numel() / 2;
    let mut d = t.data()[half..].to_vec();
    d.extend_from_slice(&t.data()[..half]);
    Tensor::new(t.shape().to_vec(), d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn losses_nonnegative_and_batch_invariant(seed in any::<u64>()) {
        let w = LossWeights::preset("scannet-renderscannet-phase1").unwrap();
        let pred = rand_tensor([2, 1, 5, 5], 0.1, 0.9, seed);
        let gt = rand_tensor([2, 1, 5, 5], 0.1, 0.9, seed ^ 1);
        let input = with_holes(gt.clone(), 3);
        let rgb = rand_tensor([2, 3, 5, 5], 0.0, 1.0, seed ^ 2);
        let (hw, lw) = (w.high, w.low);
        let losses = |p: &Tensor<f64>, g: &Tensor<f64>, i: &Tensor<f64>, c: &Tensor<f64>| {
            [
                eval(|_, v| enhancement_pseudo_loss(v[0], v[1], i, &hw), &[p.clone(), g.clone()]),
                eval(|_, v| enhancement_self_loss(v[0], v[1], i, c, &lw), &[p.clone(), g.clone()]),
                eval(|_, v| cycle_loss(v[0], v[1]), &[g.clone(), p.clone()]),
                eval(|_, v| range_loss(v[0], v[1], v[2], v[3], 2.0, 1.0), &[i.clone(), p.clone(), g.clone(), p.clone()]),
            ]
        };
        let a = losses(&pred, &gt, &input, &rgb);
        let b = losses(&swap_batch(&pred), &swap_batch(&gt), &swap_batch(&input), &swap_batch(&rgb));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*x >= 0.0);
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn translation_total_is_linear_in_each_weight(k in 0.0f64..10.0) {
        let (gens, discs) = micro_translation();
        let batch = micro_batch(80);
        let base = LossWeights::preset("scannet-renderscannet-phase1").unwrap();
        let tape = Tape::no_grad();
        let at = |w: &LossWeights| translation_total_loss(&tape, &batch, &gens, &discs, w).unwrap().total.item();
        let zero = at(&LossWeights { cycle_h: 0.0, ..base.clone() });
        let one = at(&LossWeights { cycle_h: 1.0, ..base.clone() });
        let kk = at(&LossWeights { cycle_h: k, ..base.clone() });
        prop_assert!((kk - (zero + k * (one - zero))).abs() < 1e-9);
    }
}
