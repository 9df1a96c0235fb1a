use super::{cycle_loss, identity_loss, lsgan_loss, range_loss, surface_normals, GanSide, LossWeights};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::nets::{DiscriminatorNet, DiscriminatorSet, GeneratorPair};
use crate::Result;

/// One unpaired batch: real low-quality frames and high-quality frames
/// from other scenes, NCHW.
#[derive(Debug, Clone)]
pub struct TranslationBatch<T: Real> {
    pub rgb_l: Tensor<T>,
    pub d_l: Tensor<T>,
    pub rgb_h: Tensor<T>,
    pub d_h: Tensor<T>,
}

/// Generator outputs kept for the discriminator update.
#[derive(Debug, Clone)]
pub struct TranslationOutputs<T: Real> {
    pub d_l_enh: Tensor<T>,
    pub d_h_deg: Tensor<T>,
    pub d_h_rec: Tensor<T>,
}

/// Generator-side objective and its components (already weighted).
pub struct TranslationTerms<'t, T: Real> {
    pub cycle: Var<'t, T>,
    pub range: Var<'t, T>,
    pub identity: Var<'t, T>,
    /// Low depth, low normal, high depth, high normal.
    pub adversarial: [Var<'t, T>; 4],
    pub total: Var<'t, T>,
    pub outputs: TranslationOutputs<T>,
}

impl<'t, T: Real> TranslationTerms<'t, T> {
    pub fn non_adversarial(&self) -> Result<Var<'t, T>> {
        self.cycle.add(self.range)?.add(self.identity)
    }
}

/// Normals with undefined pixels zeroed, as seen by a normal discriminator.
fn masked_normals<'t, T: Real>(d: Var<'t, T>) -> Result<Var<'t, T>> {
    let n = surface_normals(d)?;
    let s = n.valid.shape();
    let mut mask = Vec::with_capacity(3 * n.valid.numel());
    let plane = s[2] * s[3];
    for b in 0..s[0] {
        let v = &n.valid.data()[b * plane..(b + 1) * plane];
        for _ in 0..3 {
            mask.extend_from_slice(v);
        }
    }
    n.value.mul_const(&Tensor::new(vec![s[0], 3, s[2], s[3]], mask)?)
}

fn scores<'t, T: Real>(tape: &'t Tape<T>, d: &DiscriminatorNet<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    d.forward(tape, x)
}

/// Full translation objective
/// `λ_cycle·L_cycle + L_adv + L_idt + L_range` on one batch.
///
/// `L_adv` sums the generator LSGAN terms of the four discriminators with
/// unit weights.
pub fn translation_total_loss<'t, T: Real>(
    tape: &'t Tape<T>,
    batch: &TranslationBatch<T>,
    gens: &GeneratorPair<T>,
    discs: &DiscriminatorSet<T>,
    w: &LossWeights,
) -> Result<TranslationTerms<'t, T>> {
    let rgb_l = tape.input(batch.rgb_l.clone());
    let d_l = tape.input(batch.d_l.clone());
    let rgb_h = tape.input(batch.rgb_h.clone());
    let d_h = tape.input(batch.d_h.clone());

    let d_l_enh = gens.l2h.forward(tape, rgb_l, d_l)?;
    let d_h_deg = gens.h2l.forward(tape, rgb_h, d_h)?;
    let d_h_rec = gens.l2h.forward(tape, rgb_h, d_h_deg)?;
    let d_h_idt = gens.l2h.forward(tape, rgb_h, d_h)?;

    let cycle = cycle_loss(d_h, d_h_rec)?.scale(w.cycle_h);
    let range = range_loss(d_l, d_l_enh, d_h, d_h_deg, w.range_l, w.range_h)?;
    let identity = identity_loss(d_h_idt, d_h, w.idt_h)?;

    let g = |d: &DiscriminatorNet<T>, x: Var<'t, T>| lsgan_loss(None, scores(tape, d, x)?, GanSide::Generator);
    let adversarial = [
        g(&discs.low_depth, d_h_deg)?,
        g(&discs.low_normal, masked_normals(d_h_deg)?)?,
        g(&discs.high_depth, d_l_enh)?,
        g(&discs.high_normal, masked_normals(d_l_enh)?)?,
    ];
    let mut total = cycle.add(range)?.add(identity)?;
    for a in adversarial {
        total = total.add(a)?;
    }
    Ok(TranslationTerms {
        cycle,
        range,
        identity,
        adversarial,
        total,
        outputs: TranslationOutputs {
            d_l_enh: (*d_l_enh.value()).clone(),
            d_h_deg: (*d_h_deg.value()).clone(),
            d_h_rec: (*d_h_rec.value()).clone(),
        },
    })
}

/// Discriminator-side LSGAN objective, summed over the four
/// discriminators; also returns the per-discriminator parts.
///
/// The high-quality discriminators take the cycle reconstruction as their
/// real sample instead of the real high-quality depth.
pub fn translation_discriminator_loss<'t, T: Real>(
    tape: &'t Tape<T>,
    batch: &TranslationBatch<T>,
    outputs: &TranslationOutputs<T>,
    discs: &DiscriminatorSet<T>,
) -> Result<(Var<'t, T>, [Var<'t, T>; 4])> {
    let real_l = tape.constant(batch.d_l.clone());
    let fake_l = tape.constant(outputs.d_h_deg.clone());
    let real_h = tape.constant(outputs.d_h_rec.clone());
    let fake_h = tape.constant(outputs.d_l_enh.clone());
    let d = |net: &DiscriminatorNet<T>, real: Var<'t, T>, fake: Var<'t, T>| {
        lsgan_loss(
            Some(scores(tape, net, real)?),
            scores(tape, net, fake)?,
            GanSide::Discriminator,
        )
    };
    let parts = [
        d(&discs.low_depth, real_l, fake_l)?,
        d(&discs.low_normal, masked_normals(real_l)?, masked_normals(fake_l)?)?,
        d(&discs.high_depth, real_h, fake_h)?,
        d(&discs.high_normal, masked_normals(real_h)?, masked_normals(fake_h)?)?,
    ];
    let total = parts[0].add(parts[1])?.add(parts[2])?.add(parts[3])?;
    Ok((total, parts))
}
