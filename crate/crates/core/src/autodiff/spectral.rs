use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::param::SpectralState;
use super::{Parameter, Real, Tensor, Var};
use crate::{Error, Result};

pub const SIGMA_MIN: f64 = 1e-12;

fn normalize<T: Real>(v: &mut [T]) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt().max(T::of(SIGMA_MIN));
    v.iter_mut().for_each(|x| *x = *x / norm);
}

/// `W v` for `W` stored row-major as `rows x cols`.
fn mat_vec<T: Real>(w: &[T], cols: usize, v: &[T]) -> Vec<T> {
    w.chunks(cols).map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
}

fn mat_t_vec<T: Real>(w: &[T], cols: usize, u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for (row, &ui) in w.chunks(cols).zip(u) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * ui;
        }
    }
    out
}

/// `uᵀ W v`.
fn bilinear<T: Real>(w: &[T], cols: usize, u: &[T], v: &[T]) -> T {
    mat_vec(w, cols, v).iter().zip(u).map(|(&a, &b)| a * b).sum()
}

impl<T: Real> Parameter<T> {
    /// Starts spectral normalization with a random unit `u`.
    pub fn init_spectral(&mut self, seed: u64) {
        let (rows, cols) = self.matrix_dims();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut u: Vec<T> = (0..rows)
            .map(|_| T::of(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)))
            .collect();
        normalize(&mut u);
        let mut v = mat_t_vec(self.value().data(), cols, &u);
        normalize(&mut v);
        self.spectral = Some(SpectralState { u, v });
    }

    /// Runs `iterations` power-iteration steps on the persistent vectors and
    /// returns the estimate of the top singular value (clamped below).
    pub fn power_iterate(&mut self, iterations: usize) -> Result<T> {
        if iterations == 0 {
            return Err(Error::InvalidArgument("power iteration needs at least 1 step".into()));
        }
        if self.spectral.is_none() {
            self.init_spectral(0);
        }
        let (_, cols) = self.matrix_dims();
        let w = self.shared_value();
        let state = self.spectral.as_mut().expect("initialized above");
        for _ in 0..iterations {
            state.v = mat_t_vec(w.data(), cols, &state.u);
            normalize(&mut state.v);
            state.u = mat_vec(w.data(), cols, &state.v);
            normalize(&mut state.u);
        }
        Ok(bilinear(w.data(), cols, &state.u, &state.v).max(T::of(SIGMA_MIN)))
    }
}

/// `w / σ̂` after `iterations` power-iteration steps; updates the persistent
/// vectors of `w`.
pub fn spectral_normalize<T: Real>(w: &mut Parameter<T>, iterations: usize) -> Result<Tensor<T>> {
    let sigma = w.power_iterate(iterations)?;
    Ok(w.value().map(|x| x / sigma))
}

impl<'t, T: Real> Var<'t, T> {
    /// `W / (uᵀ W v)` with `u`, `v` held constant, `W` viewed as
    /// `shape[0] x rest`.
    pub fn spectral_scale(self, state: &SpectralState<T>) -> Result<Var<'t, T>> {
        let w = self.value();
        let rows = w.shape().first().copied().unwrap_or(1);
        let cols = w.numel() / rows.max(1);
        if state.u.len() != rows || state.v.len() != cols {
            return Err(Error::shape(
                "spectral_scale",
                format!("vectors {}x{} for weight {:?}", state.u.len(), state.v.len(), w.shape()),
            ));
        }
        let raw = bilinear(w.data(), cols, &state.u, &state.v);
        let clamped = raw < T::of(SIGMA_MIN);
        let sigma = raw.max(T::of(SIGMA_MIN));
        let out = w.map(|x| x / sigma);
        let (u, v) = (state.u.clone(), state.v.clone());
        let (id, shape) = (self.id, w.shape().to_vec());
        Ok(self.tape.push(out, self.requires_grad(), move |g, sink| {
            let gw: T = g.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum();
            let coef = if clamped { T::zero() } else { gw / (sigma * sigma) };
            sink.with(id, &shape, |dst| {
                for (i, (d, &gi)) in dst.iter_mut().zip(g.data()).enumerate() {
                    *d += gi / sigma - coef * u[i / cols] * v[i % cols];
                }
            });
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{gradient_check, GradCheckOptions};
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn top_singular(w: &Tensor<f64>) -> f64 {
        let rows = w.shape()[0];
        let cols = w.numel() / rows;
        DMatrix::from_row_slice(rows, cols, w.data()).singular_values().max()
    }

    #[test]
    fn diagonal_converges_to_largest_entry() {
        let mut p = Parameter::new("w", Tensor::<f64>::new([2, 2], vec![3.0, 0.0, 0.0, 1.0]).unwrap());
        p.init_spectral(11);
        let sigma = p.power_iterate(20).unwrap();
        assert!((sigma - 3.0).abs() < 1e-6, "{sigma}");
        let normalized = spectral_normalize(&mut p, 1).unwrap();
        assert!((top_singular(&normalized) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_matrix_is_unchanged() {
        let (c, s) = (0.6f64, 0.8f64);
        let w = Tensor::<f64>::new([2, 2], vec![c, -s, s, c]).unwrap();
        let mut p = Parameter::new("q", w.clone());
        let out = spectral_normalize(&mut p, 3).unwrap();
        for (a, b) in out.data().iter().zip(w.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_does_not_blow_up() {
        let mut p = Parameter::new("z", Tensor::<f64>::zeros([3, 2]));
        let out = spectral_normalize(&mut p, 2).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conv_shaped_weight_is_normalized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data = (0..4 * 3 * 3 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = Parameter::new("conv", Tensor::new([4, 3, 3, 3], data).unwrap());
        let out = spectral_normalize(&mut p, 50).unwrap();
        assert!((top_singular(&out) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_iterations_is_error() {
        let mut p = Parameter::new("w", Tensor::<f64>::full([2, 2], 1.0));
        assert!(spectral_normalize(&mut p, 0).is_err());
    }

    #[test]
    fn scale_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = Tensor::new([3, 4], data).unwrap();
        let mut p = Parameter::new("w", w.clone());
        p.power_iterate(5).unwrap();
        let state = p.spectral_state().unwrap().clone();
        let r = gradient_check(
            |_t, v| {
                let k = Tensor::new([3, 4], (0..12).map(|i| (i as f64).sin()).collect())?;
                Ok(v[0].spectral_scale(&state)?.mul_const(&k)?.sum())
            },
            &[w],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
}
