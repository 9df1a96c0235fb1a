use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depthsr_core::autodiff::{Tape, Tensor};
use depthsr_core::depth::{bicubic_upsample, DepthMap};
use depthsr_core::metrics::ssim;

fn ramp(shape: [usize; 4]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|i| ((i as f32) * 0.37).sin()).collect()).unwrap()
}

fn depth(w: usize, h: usize) -> DepthMap {
    DepthMap::from_fn(w, h, |x, y| 1500.0 + 12.0 * x as f64 + 300.0 * ((y as f64) * 0.2).sin())
}

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d_3x3");
    for &(ch, side) in &[(8, 32), (16, 64)] {
        let x = ramp([4, ch, side, side]);
        let w = ramp([ch, ch, 3, 3]);
        g.bench_with_input(BenchmarkId::new("forward_backward", format!("{ch}ch_{side}px")), &(), |b, _| {
            b.iter(|| {
                let tape = Tape::new();
                let (xv, wv) = (tape.input(x.clone()), tape.input(w.clone()));
                let y = xv.conv2d(wv, None, 1, 1).unwrap().square().mean();
                black_box(y.backward().unwrap());
            })
        });
    }
    g.finish();
}

fn ssim_bench(c: &mut Criterion) {
    let (a, b) = (depth(64, 48), depth(64, 48).crop(0, 0, 64, 48).unwrap());
    c.bench_function("ssim_64x48", |bn| bn.iter(|| ssim(black_box(&a), black_box(&b)).unwrap()));
}

fn bicubic(c: &mut Criterion) {
    let d = depth(160, 120);
    c.bench_function("bicubic_x2_160x120", |b| b.iter(|| bicubic_upsample(black_box(&d), 2).unwrap()));
}

criterion_group!(benches, conv, ssim_bench, bicubic);
criterion_main!(benches);
