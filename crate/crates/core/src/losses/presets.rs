use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::{Error, Result};

pub const WEIGHTS_SCHEMA: u32 = 1;

/// Per-pixel weight chosen by the input hole mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMask {
    pub weight_defined: f64,
    pub weight_hole: f64,
}

impl WeightMask {
    pub const UNIFORM: WeightMask = WeightMask {
        weight_defined: 1.0,
        weight_hole: 1.0,
    };

    /// `weight_hole` where `input` is a hole, `weight_defined` elsewhere,
    /// and 0 wherever `target` is a hole (nothing to compare against).
    pub fn pixel_weights<T: Real>(&self, input: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        if input.shape() != target.shape() {
            return Err(Error::shape(
                "pixel_weights",
                format!("input {:?} vs target {:?}", input.shape(), target.shape()),
            ));
        }
        let (wd, wh) = (T::of(self.weight_defined), T::of(self.weight_hole));
        let data = input
            .data()
            .iter()
            .zip(target.data())
            .map(|(&i, &t)| {
                if t <= T::zero() {
                    T::zero()
                } else if i > T::zero() {
                    wd
                } else {
                    wh
                }
            })
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }
}

/// A loss coefficient with its pixel weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub lambda: f64,
    #[serde(flatten)]
    pub mask: WeightMask,
}

impl Term {
    pub const OFF: Term = Term {
        lambda: 0.0,
        mask: WeightMask::UNIFORM,
    };

    pub fn new(lambda: f64, weight_defined: f64, weight_hole: f64) -> Self {
        Self {
            lambda,
            mask: WeightMask {
                weight_defined,
                weight_hole,
            },
        }
    }
}

/// Enhancement loss weights for one domain. Terms a domain does not use
/// (surface terms for `L`, the edge term for `H`) are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainWeights {
    pub depth1: Term,
    pub depth2: Term,
    #[serde(default = "off")]
    pub surf1: Term,
    #[serde(default = "off")]
    pub surf2: Term,
    pub smooth: f64,
    #[serde(default)]
    pub edge: f64,
}

fn off() -> Term {
    Term::OFF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub schema_version: u32,
    pub name: String,
    pub cycle_h: f64,
    pub range_l: f64,
    pub range_h: f64,
    pub idt_h: f64,
    pub high: DomainWeights,
    pub low: DomainWeights,
}

pub const PRESET_NAMES: [&str; 4] = [
    "scannet-renderscannet-phase1",
    "scannet-renderscannet-phase2",
    "scannet-interiornet-phase1",
    "sr-finetune",
];

const PRESET_JSON: [&str; 4] = [
    include_str!("presets/scannet-renderscannet-phase1.json"),
    include_str!("presets/scannet-renderscannet-phase2.json"),
    include_str!("presets/scannet-interiornet-phase1.json"),
    include_str!("presets/sr-finetune.json"),
];

impl LossWeights {
    pub fn preset(name: &str) -> Result<Self> {
        let i = PRESET_NAMES
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown loss preset {name:?}; known: {PRESET_NAMES:?}")))?;
        Self::from_json(PRESET_JSON[i])
    }

    /// A built-in preset name, or a path to a weights JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESET_NAMES.contains(&name_or_path) || !name_or_path.ends_with(".json") {
            return Self::preset(name_or_path);
        }
        let s = std::fs::read_to_string(name_or_path).map_err(|e| Error::io(name_or_path, e))?;
        Self::from_json(&s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(s)?;
        if w.schema_version != WEIGHTS_SCHEMA {
            return Err(Error::Config(format!("loss weight schema {} unsupported", w.schema_version)));
        }
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut values = vec![self.cycle_h, self.range_l, self.range_h, self.idt_h];
        for d in [&self.high, &self.low] {
            values.extend([d.smooth, d.edge]);
            for t in [d.depth1, d.depth2, d.surf1, d.surf2] {
                values.extend([t.lambda, t.mask.weight_defined, t.mask.weight_hole]);
            }
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("loss weights of {:?} must be finite and >= 0", self.name)));
        }
        Ok(())
    }
}
