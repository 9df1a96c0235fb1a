use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Split {
    TrainA,
    TrainB,
    Val,
    Test,
}

/// Relative paths of one frame's rasters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePaths {
    pub rgb: String,
    pub depth_lq: String,
    pub depth_hq: String,
    pub depth_hq_down: String,
}

impl FramePaths {
    /// `scenes/<scene>/<frame>.{rgb,lq,hq,hqdown}.png`.
    pub fn standard(scene: &str, frame: &str) -> Self {
        let stem = format!("scenes/{scene}/{frame}");
        Self {
            rgb: format!("{stem}.rgb.png"),
            depth_lq: format!("{stem}.lq.png"),
            depth_hq: format!("{stem}.hq.png"),
            depth_hq_down: format!("{stem}.hqdown.png"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub scene: String,
    pub frame: String,
    pub paths: FramePaths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub record: FrameRecord,
    pub split: Split,
}

/// Which raster of a frame an unpaired sample refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quality {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub frames: Vec<ManifestEntry>,
}

/// Scene-level split fractions; `train + val + test` must be 1. Train
/// scenes are divided between A and B by `a_share`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    #[serde(default = "half")]
    pub a_share: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            a_share: 0.5,
        }
    }
}

pub const MIN_SCENES: usize = 4;

/// Assigns whole scenes to splits: shuffled by `seed`, the first scenes go
/// to test, then val, and the rest are divided between Train A and B.
pub fn build_splits(frames: Vec<FrameRecord>, fractions: SplitFractions, seed: u64) -> Result<DatasetManifest> {
    let f = fractions;
    let parts = [f.train, f.val, f.test, f.a_share];
    if parts.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.train + f.val + f.test - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions {f:?}")));
    }
    let scenes: BTreeSet<&str> = frames.iter().map(|r| r.scene.as_str()).collect();
    let n = scenes.len();
    if n < MIN_SCENES {
        return Err(Error::InvalidArgument(format!("{n} scenes; need at least {MIN_SCENES}")));
    }
    let mut order: Vec<String> = scenes.into_iter().map(str::to_owned).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (f.test * n as f64).round() as usize;
    let n_val = (f.val * n as f64).round() as usize;
    let n_train = n.checked_sub(n_test + n_val).filter(|&t| t >= 2).ok_or_else(|| {
        Error::InvalidArgument(format!("{n} scenes leave fewer than 2 for training with {f:?}"))
    })?;
    let n_a = ((f.a_share * n_train as f64).round() as usize).clamp(1, n_train - 1);
    let split_of = |scene: &str| {
        let i = order.iter().position(|s| s == scene).expect("scene from frames");
        if i < n_test {
            Split::Test
        } else if i < n_test + n_val {
            Split::Val
        } else if i < n_test + n_val + n_a {
            Split::TrainA
        } else {
            Split::TrainB
        }
    };
    let frames = frames
        .into_iter()
        .map(|record| ManifestEntry {
            split: split_of(&record.scene),
            record,
        })
        .collect();
    Ok(DatasetManifest {
        schema_version: MANIFEST_SCHEMA,
        seed,
        frames,
    })
}

impl DatasetManifest {
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.frames.iter().filter(move |e| e.split == split)
    }

    pub fn scenes(&self, split: Split) -> BTreeSet<&str> {
        self.in_split(split).map(|e| e.record.scene.as_str()).collect()
    }

    /// Unpaired set: low-quality frames of Train A and high-quality frames
    /// of Train B.
    pub fn unpaired(&self) -> Vec<(&ManifestEntry, Quality)> {
        self.in_split(Split::TrainA)
            .map(|e| (e, Quality::Low))
            .chain(self.in_split(Split::TrainB).map(|e| (e, Quality::High)))
            .collect()
    }

    /// Supervised set: paired frames of Train B.
    pub fn supervised(&self) -> Vec<&ManifestEntry> {
        self.in_split(Split::TrainB).collect()
    }

    pub fn test(&self) -> Vec<&ManifestEntry> {
        self.in_split(Split::Test).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.schema_version != MANIFEST_SCHEMA {
            return Err(Error::Config(format!("manifest schema {} unsupported", m.schema_version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(scenes: usize, frames: usize) -> Vec<FrameRecord> {
        (0..scenes)
            .flat_map(|s| {
                (0..frames).map(move |f| {
                    let (scene, frame) = (format!("scene{s:03}"), format!("{f:04}"));
                    FrameRecord {
                        paths: FramePaths::standard(&scene, &frame),
                        scene,
                        frame,
                    }
                })
            })
            .collect()
    }

    #[test]
    fn ten_scenes_count() {
        let m = build_splits(records(10, 2), SplitFractions::default(), 3).unwrap();
        let count = |s| m.scenes(s).len();
        assert_eq!(
            (count(Split::TrainA), count(Split::TrainB), count(Split::Val), count(Split::Test)),
            (3, 3, 2, 2)
        );
    }

    #[test]
    fn deterministic_and_round_trips() {
        let a = build_splits(records(8, 3), SplitFractions::default(), 11).unwrap();
        let b = build_splits(records(8, 3), SplitFractions::default(), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(DatasetManifest::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    #[test]
    fn too_few_scenes_is_error() {
        assert!(build_splits(records(3, 5), SplitFractions::default(), 0).is_err());
        let bad = SplitFractions { train: 0.9, ..SplitFractions::default() };
        assert!(build_splits(records(10, 1), bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn splits_are_disjoint(seed in any::<u64>(), scenes in 4usize..20) {
            let m = build_splits(records(scenes, 2), SplitFractions::default(), seed).unwrap();
            let sets = [Split::TrainA, Split::TrainB, Split::Val, Split::Test].map(|s| m.scenes(s));
            for i in 0..4 {
                for j in i + 1..4 {
                    prop_assert!(sets[i].is_disjoint(&sets[j]));
                }
            }
            prop_assert!(!sets[0].is_empty() && !sets[1].is_empty());
            for (e, q) in m.unpaired() {
                if e.split == Split::TrainA {
                    prop_assert_eq!(q, Quality::Low);
                }
            }
            prop_assert!(m.supervised().iter().all(|e| e.split == Split::TrainB));
        }
    }
}
