use crate::depth::DepthMap;
use crate::metrics::ssim;
use crate::Result;

/// Indices of `(raw, rendered)` pairs whose SSIM reaches `threshold` and
/// whose rendering has no holes the raw patch lacks.
pub fn ssim_patch_filter(pairs: &[(DepthMap, DepthMap)], threshold: f64) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for (i, (raw, rendered)) in pairs.iter().enumerate() {
        let misaligned = raw
            .data()
            .iter()
            .zip(rendered.data())
            .any(|(&r, &s)| s == 0.0 && r != 0.0);
        if !misaligned && ssim(raw, rendered)? >= threshold {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{degrade, DegradationSpec};
    use proptest::prelude::*;

    fn patch(seed: u64) -> DepthMap {
        DepthMap::from_fn(32, 32, |x, y| 1500.0 + 20.0 * x as f64 + 10.0 * y as f64 + (seed % 7) as f64 * 50.0)
    }

    #[test]
    fn identical_pair_is_kept() {
        let p = patch(1);
        assert_eq!(ssim_patch_filter(&[(p.clone(), p)], 0.8).unwrap(), vec![0]);
    }

    #[test]
    fn corrupted_pair_is_dropped() {
        let clean = patch(2);
        let spec = DegradationSpec {
            noise_coeff: 250.0,
            ..DegradationSpec::none(1)
        };
        let noisy = degrade(&clean, &spec, 3).unwrap();
        let s = ssim(&noisy, &clean).unwrap();
        assert!(s < 0.8, "{s}");
        assert!(ssim_patch_filter(&[(noisy, clean)], 0.8).unwrap().is_empty());
    }

    #[test]
    fn threshold_one_keeps_only_identical() {
        let a = patch(3);
        let mut b = a.clone();
        b.set(5, 5, a.get(5, 5) + 1.0);
        let pairs = [(a.clone(), a.clone()), (a, b)];
        assert_eq!(ssim_patch_filter(&pairs, 1.0).unwrap(), vec![0]);
    }

    #[test]
    fn new_holes_in_rendering_drop_pair() {
        let a = patch(4);
        let mut b = a.clone();
        b.set(0, 0, 0.0);
        assert!(ssim_patch_filter(&[(a, b)], 0.0).unwrap().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn kept_set_is_order_invariant(seed in any::<u64>()) {
            let pairs: Vec<_> = (0..6u64)
                .map(|i| {
                    let clean = patch(i);
                    let spec = DegradationSpec { noise_coeff: 40.0 * i as f64, ..DegradationSpec::none(1) };
                    (degrade(&clean, &spec, seed ^ i).unwrap(), clean)
                })
                .collect();
            let kept = ssim_patch_filter(&pairs, 0.8).unwrap();
            let rev: Vec<_> = pairs.iter().rev().cloned().collect();
            let mut kept_rev: Vec<_> = ssim_patch_filter(&rev, 0.8).unwrap().into_iter().map(|i| 5 - i).collect();
            kept_rev.sort();
            prop_assert!(kept.iter().all(|&i| i < pairs.len()));
            prop_assert_eq!(kept, kept_rev);
        }
    }
}
