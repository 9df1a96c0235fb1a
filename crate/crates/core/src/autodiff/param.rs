use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Real, Tensor};

static NEXT_KEY: AtomicU64 = AtomicU64::new(1);

fn fresh_key() -> u64 {
    NEXT_KEY.fetch_add(1, Ordering::Relaxed)
}

/// Adam first/second moments and step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

/// Persistent power-iteration vectors for spectral normalization of a
/// weight reshaped to `rows x cols` (`rows` = output channels).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
}

/// A named trainable tensor with its optimizer state.
///
/// Every parameter carries a process-unique key used to bind it to a tape;
/// clones get a fresh key so two copies never alias on one tape.
#[derive(Debug)]
pub struct Parameter<T: Real> {
    key: u64,
    name: String,
    value: Arc<Tensor<T>>,
    pub(crate) adam: AdamState<T>,
    pub(crate) spectral: Option<SpectralState<T>>,
}

impl<T: Real> Clone for Parameter<T> {
    fn clone(&self) -> Self {
        Self {
            key: fresh_key(),
            name: self.name.clone(),
            value: Arc::new((*self.value).clone()),
            adam: self.adam.clone(),
            spectral: self.spectral.clone(),
        }
    }
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.numel();
        Self {
            key: fresh_key(),
            name: name.into(),
            value: Arc::new(value),
            adam: AdamState {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
                step: 0,
            },
            spectral: None,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub(crate) fn shared_value(&self) -> Arc<Tensor<T>> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Mutable access; copies only if a live tape still shares the buffer.
    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.value)
    }

    pub fn set_value(&mut self, value: Tensor<T>) {
        assert_eq!(value.shape(), self.shape(), "parameter {} shape change", self.name);
        self.value = Arc::new(value);
    }

    pub fn adam_state(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn spectral_state(&self) -> Option<&SpectralState<T>> {
        self.spectral.as_ref()
    }

    /// Rows and columns of the matrix view used for spectral normalization.
    pub fn matrix_dims(&self) -> (usize, usize) {
        let rows = self.shape().first().copied().unwrap_or(1);
        (rows, self.numel() / rows.max(1))
    }
}

/// Anything that owns parameters. Visiting order is the canonical order used
/// for initialization and checkpoints.
pub trait Module<T: Real> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>));

    fn params(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(p));
        out
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}
