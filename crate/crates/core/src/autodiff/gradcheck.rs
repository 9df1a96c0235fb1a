use super::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates whose perturbation by `±dead_zone·h` flips any non-smooth
    /// branch (relu, abs, clamp) are excluded.
    pub dead_zone: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, dead_zone: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub excluded: usize,
    /// `(input, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

/// Compares tape gradients of the scalar `f(inputs)` against central
/// differences, coordinate by coordinate. Relative error is
/// `|a - n| / max(1, |a|, |n|)`.
pub fn gradient_check<F>(f: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    if opts.h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step h = {}", opts.h)));
    }
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let y = f(&tape, &vars)?;
        if y.value().numel() != 1 {
            return Err(Error::shape("gradient_check", format!("output {:?} is not scalar", y.shape())));
        }
        let grads = y.backward()?;
        vars.iter()
            .zip(inputs)
            .map(|(v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
            .collect()
    };

    // Value and branch signature at a perturbed point.
    let eval = |which: usize, coord: usize, delta: f64| -> Result<(f64, Vec<u8>)> {
        let tape = Tape::no_grad();
        tape.enable_branch_trace();
        let vars: Vec<_> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                if i == which {
                    t.data_mut()[coord] += delta;
                }
                tape.constant(t)
            })
            .collect();
        let y = f(&tape, &vars)?.item();
        Ok((y, tape.take_branch_trace().unwrap_or_default()))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        excluded: 0,
        worst: None,
    };
    let wide = opts.h * opts.dead_zone;
    for (which, input) in inputs.iter().enumerate() {
        for coord in 0..input.numel() {
            let (_, lo_sig) = eval(which, coord, -wide)?;
            let (_, hi_sig) = eval(which, coord, wide)?;
            let (yp, sp) = eval(which, coord, opts.h)?;
            let (ym, sm) = eval(which, coord, -opts.h)?;
            if lo_sig != hi_sig || sp != sm || sp != lo_sig {
                report.excluded += 1;
                continue;
            }
            let numeric = (yp - ym) / (2.0 * opts.h);
            let a = analytic[which].data()[coord];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if !rel.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite gradient comparison at input {which} coordinate {coord}"
                )));
            }
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((which, coord));
            }
        }
    }
    Ok(report)
}
