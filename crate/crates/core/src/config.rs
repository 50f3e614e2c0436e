//! Run configuration as flat `key = value` text, plus ablation variants.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::rules::MinerConfig;

/// Encoding of the edge interval fed to dynamics-view attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeEncoding {
    /// Learned per-dimension frequencies and phases.
    Harmonic,
    /// The scalar cosine tag of the initializer, tiled to `d`.
    Scalar,
    Off,
}

/// Component switches. Tags combine with `+`, e.g. `simple-dyn+no-inv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    tag: String,
    pub use_invariance: bool,
    pub use_dynamics: bool,
    pub contrastive: bool,
    pub decompose_relations: bool,
    pub decompose_entities: bool,
    pub simple_dynamics: bool,
    pub time_encoding: TimeEncoding,
}

pub const VARIANT_TAGS: [&str; 10] = [
    "full",
    "no-dyn",
    "no-inv",
    "no-coa",
    "no-red",
    "no-coa-red",
    "no-te",
    "cos-te",
    "ent-decomp",
    "simple-dyn",
];

impl Variant {
    pub fn full() -> Self {
        Self {
            tag: "full".into(),
            use_invariance: true,
            use_dynamics: true,
            contrastive: true,
            decompose_relations: true,
            decompose_entities: false,
            simple_dynamics: false,
            time_encoding: TimeEncoding::Harmonic,
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Contrastive alignment needs both views.
    pub fn aligns_views(&self) -> bool {
        self.contrastive && self.use_invariance && self.use_dynamics
    }
}

impl Default for Variant {
    fn default() -> Self {
        Self::full()
    }
}

impl FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let mut v = Variant::full();
        v.tag = s.trim().to_string();
        for part in s.split('+').map(str::trim) {
            match part {
                "full" => {}
                "no-dyn" => v.use_dynamics = false,
                "no-inv" => v.use_invariance = false,
                "no-coa" => v.contrastive = false,
                "no-red" => v.decompose_relations = false,
                "no-coa-red" => {
                    v.contrastive = false;
                    v.decompose_relations = false;
                }
                "no-te" => v.time_encoding = TimeEncoding::Off,
                "cos-te" => v.time_encoding = TimeEncoding::Scalar,
                "ent-decomp" => v.decompose_entities = true,
                "simple-dyn" => v.simple_dynamics = true,
                other => {
                    return Err(CoreError::Config(format!(
                        "unknown variant {other:?} (expected one of {})",
                        VARIANT_TAGS.join(", ")
                    )))
                }
            }
        }
        if !v.use_invariance && !v.use_dynamics {
            return Err(CoreError::Config(format!("variant {s:?} disables both views")));
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag)
    }
}

/// Hyperparameters shared by a dataset preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub granularity: u32,
    pub cap: usize,
    pub mu: f64,
    pub gamma: f64,
    pub attention_layers: usize,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "icews14s",
        granularity: 24,
        cap: 10,
        mu: 0.2,
        gamma: 0.3,
        attention_layers: 3,
    },
    Preset {
        name: "icews18",
        granularity: 24,
        cap: 8,
        mu: 0.01,
        gamma: 0.03,
        attention_layers: 2,
    },
    Preset {
        name: "icews05-15",
        granularity: 24,
        cap: 10,
        mu: 0.15,
        gamma: 0.2,
        attention_layers: 2,
    },
    Preset {
        name: "gdelt",
        granularity: 15,
        cap: 8,
        mu: 0.3,
        gamma: 0.25,
        attention_layers: 2,
    },
];

pub fn preset(name: &str) -> Result<Preset> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .copied()
        .ok_or_else(|| CoreError::Config(format!("unknown dataset preset {name:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub granularity: u32,
    pub dim: usize,
    pub history_len: usize,
    pub gcn_layers: usize,
    pub inv_layers: usize,
    pub dyn_layers: usize,
    pub cap: usize,
    pub channels: usize,
    pub kernel: usize,
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
    pub num_walks: usize,
    pub min_body_support: u64,
    pub exhaustive_threshold: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PRESETS[0];
        Self {
            data_dir: None,
            granularity: p.granularity,
            dim: 200,
            history_len: 3,
            gcn_layers: 2,
            inv_layers: p.attention_layers,
            dyn_layers: p.attention_layers,
            cap: p.cap,
            channels: 50,
            kernel: 3,
            alpha: 0.7,
            mu: p.mu,
            gamma: p.gamma,
            dropout: 0.2,
            lr: 1e-3,
            weight_decay: 1e-5,
            grad_clip: 1.0,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            variant: Variant::full(),
            num_walks: 200,
            min_body_support: 2,
            exhaustive_threshold: 10_000,
        }
    }
}

const KEYS: [&str; 24] = [
    "data_dir",
    "granularity",
    "dim",
    "history_len",
    "gcn_layers",
    "inv_layers",
    "dyn_layers",
    "cap",
    "channels",
    "kernel",
    "alpha",
    "mu",
    "gamma",
    "dropout",
    "lr",
    "weight_decay",
    "grad_clip",
    "max_epochs",
    "patience",
    "seed",
    "variant",
    "num_walks",
    "min_body_support",
    "exhaustive_threshold",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CoreError::Config(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    pub fn with_preset(p: &Preset) -> Self {
        let mut c = Self::default();
        c.apply_preset(p);
        c
    }

    /// Small model used with the default synthetic dataset.
    pub fn synthetic() -> Self {
        Self {
            granularity: 1,
            dim: 32,
            inv_layers: 2,
            dyn_layers: 2,
            cap: 3,
            channels: 8,
            mu: 0.1,
            gamma: 0.2,
            dropout: 0.1,
            lr: 0.01,
            max_epochs: 30,
            patience: 30,
            seed: 7,
            ..Self::default()
        }
    }

    pub fn apply_preset(&mut self, p: &Preset) {
        self.granularity = p.granularity;
        self.cap = p.cap;
        self.mu = p.mu;
        self.gamma = p.gamma;
        self.inv_layers = p.attention_layers;
        self.dyn_layers = p.attention_layers;
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "granularity" => self.granularity = parse_value(key, value)?,
            "dim" => self.dim = parse_value(key, value)?,
            "history_len" => self.history_len = parse_value(key, value)?,
            "gcn_layers" => self.gcn_layers = parse_value(key, value)?,
            "inv_layers" => self.inv_layers = parse_value(key, value)?,
            "dyn_layers" => self.dyn_layers = parse_value(key, value)?,
            "cap" => self.cap = parse_value(key, value)?,
            "channels" => self.channels = parse_value(key, value)?,
            "kernel" => self.kernel = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "mu" => self.mu = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "grad_clip" => self.grad_clip = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "variant" => self.variant = value.parse()?,
            "num_walks" => self.num_walks = parse_value(key, value)?,
            "min_body_support" => self.min_body_support = parse_value(key, value)?,
            "exhaustive_threshold" => self.exhaustive_threshold = parse_value(key, value)?,
            "preset" => self.apply_preset(&preset(value)?),
            other => return Err(CoreError::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CoreError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.merge_text(text)?;
        c.validate()?;
        Ok(c)
    }

    fn get(&self, key: &str) -> String {
        match key {
            "data_dir" => self
                .data_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "granularity" => self.granularity.to_string(),
            "dim" => self.dim.to_string(),
            "history_len" => self.history_len.to_string(),
            "gcn_layers" => self.gcn_layers.to_string(),
            "inv_layers" => self.inv_layers.to_string(),
            "dyn_layers" => self.dyn_layers.to_string(),
            "cap" => self.cap.to_string(),
            "channels" => self.channels.to_string(),
            "kernel" => self.kernel.to_string(),
            "alpha" => self.alpha.to_string(),
            "mu" => self.mu.to_string(),
            "gamma" => self.gamma.to_string(),
            "dropout" => self.dropout.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "seed" => self.seed.to_string(),
            "variant" => self.variant.to_string(),
            "num_walks" => self.num_walks.to_string(),
            "min_body_support" => self.min_body_support.to_string(),
            "exhaustive_threshold" => self.exhaustive_threshold.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key in a fixed order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::Config(msg));
        if self.granularity == 0 {
            return fail("granularity must be positive".into());
        }
        if self.dim == 0 || self.channels == 0 {
            return fail("dim and channels must be positive".into());
        }
        if self.history_len == 0 {
            return fail("history_len must be at least 1".into());
        }
        if self.gcn_layers == 0 || self.inv_layers == 0 || self.dyn_layers == 0 {
            return fail("layer counts must be at least 1".into());
        }
        if self.cap == 0 {
            return fail("cap must be at least 1".into());
        }
        if self.kernel.is_multiple_of(2) {
            return fail(format!("kernel width {} must be odd", self.kernel));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return fail(format!("mu {} must be non-negative", self.mu));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma {} must be positive", self.gamma));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return fail("lr must be positive and weight_decay non-negative".into());
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            return fail("grad_clip must be non-negative (0 disables)".into());
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.num_walks == 0 {
            return fail("num_walks must be at least 1".into());
        }
        Ok(())
    }

    pub fn miner(&self) -> MinerConfig {
        MinerConfig {
            num_walks: self.num_walks,
            min_body_support: self.min_body_support,
            exhaustive_threshold: self.exhaustive_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::with_preset(&preset("gdelt").unwrap());
        c.variant = "simple-dyn+no-inv".parse().unwrap();
        c.data_dir = Some("data/x".into());
        c.alpha = 0.1 + 0.2;
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn ranges_are_checked() {
        assert!(RunConfig::parse("alpha = 1.5").is_err());
        assert!(RunConfig::parse("gamma = 0").is_err());
        assert!(RunConfig::parse("mu = -1").is_err());
        assert!(RunConfig::parse("kernel = 4").is_err());
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("dim 3").is_err());
        assert_eq!(RunConfig::parse("preset = icews18").unwrap().cap, 8);
    }

    #[test]
    fn variant_tags() {
        for tag in VARIANT_TAGS {
            assert_eq!(tag.parse::<Variant>().unwrap().tag(), tag);
        }
        let v: Variant = "no-coa-red".parse().unwrap();
        assert!(!v.contrastive && !v.decompose_relations);
        assert!("no-dyn+no-inv".parse::<Variant>().is_err());
        assert!("nope".parse::<Variant>().is_err());
        assert!(!"no-dyn".parse::<Variant>().unwrap().aligns_views());
    }
}
