//! Run configuration.
//!
//! The file format is TOML, written either with `[section]` headers or with
//! dotted keys such as `aug.p_e = 0.3`. Every key has a default, so an empty
//! file is a valid configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::contrast::ContrastConfig;
use crate::curriculum::{CurriculumConfig, Schedule};
use crate::encoder::AdamConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Uniform augmentation instead of guidance-shaped probabilities.
    WoCl,
    /// Entropy loss weight forced to zero.
    WoCe,
    /// Every node performs only the discrimination task.
    WoCud,
    /// Every node performs only the clustering task.
    WoCuc,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::None,
        Ablation::WoCl,
        Ablation::WoCe,
        Ablation::WoCud,
        Ablation::WoCuc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::WoCl => "wo_cl",
            Ablation::WoCe => "wo_ce",
            Ablation::WoCud => "wo_cud",
            Ablation::WoCuc => "wo_cuc",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }
}

/// How k-means is seeded across epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansSeeding {
    /// A fresh seed per epoch, derived from the master seed.
    #[default]
    PerEpoch,
    /// The same derived seed every epoch.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub seed: u64,
    /// Weight of the entropy loss.
    pub gamma: f64,
    pub ablation: Ablation,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 400,
            seed: 0,
            gamma: 1.0,
            ablation: Ablation::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub out: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { hidden: 256, out: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub seed_policy: KMeansSeeding,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub train: TrainSection,
    pub encoder: EncoderConfig,
    pub optim: AdamConfig,
    pub contrast: ContrastConfig,
    pub aug: AugmentConfig,
    pub curriculum: CurriculumConfig,
    pub kmeans: KMeansConfig,
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully expanded configuration, every key present.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if !(self.train.gamma >= 0.0 && self.train.gamma.is_finite()) {
            return Err(Error::Config(format!("train.gamma must be non-negative, got {}", self.train.gamma)));
        }
        if self.encoder.hidden == 0 || self.encoder.out == 0 {
            return Err(Error::Config("encoder.hidden and encoder.out must be positive".into()));
        }
        let o = &self.optim;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0)
            || !(o.weight_decay >= 0.0)
        {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        self.contrast.validate()?;
        self.aug.validate()?;
        self.curriculum.validate()
    }

    /// Configuration with the ablation folded into the individual settings.
    pub fn effective(&self) -> TrainConfig {
        let mut cfg = *self;
        match cfg.train.ablation {
            Ablation::WoCl => cfg.aug.random = true,
            Ablation::WoCe => cfg.train.gamma = 0.0,
            _ => {}
        }
        cfg
    }

    pub fn schedule(&self) -> Schedule {
        match (self.train.ablation, self.curriculum.fixed_ratio) {
            (Ablation::WoCud, _) => Schedule::AllDiscrimination,
            (Ablation::WoCuc, _) => Schedule::AllClustering,
            (_, Some(r)) => Schedule::FixedRatio(r),
            (_, None) => Schedule::SelfPaced {
                pace: self.curriculum.pace,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::RemovalMode;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(TrainConfig::from_toml_str("").unwrap(), TrainConfig::default());
    }

    #[test]
    fn dotted_keys_and_sections_both_parse() {
        let dotted = TrainConfig::from_toml_str(
            "aug.p_e = 0.3\naug.mode = \"literal\"\ncontrast.tau = 0.2\ncurriculum.fixed_ratio = 0.5\ntrain.ablation = \"wo_cuc\"\n",
        )
        .unwrap();
        let sections = TrainConfig::from_toml_str(
            "[aug]\np_e = 0.3\nmode = \"literal\"\n[contrast]\ntau = 0.2\n[curriculum]\nfixed_ratio = 0.5\n[train]\nablation = \"wo_cuc\"\n",
        )
        .unwrap();
        assert_eq!(dotted, sections);
        assert_eq!(dotted.aug.mode, RemovalMode::Literal);
        assert_eq!(dotted.curriculum.fixed_ratio, Some(0.5));
        assert_eq!(dotted.schedule(), Schedule::AllClustering);
    }

    #[test]
    fn unknown_and_invalid_keys_are_rejected() {
        assert!(TrainConfig::from_toml_str("aug.p_x = 1").is_err());
        assert!(TrainConfig::from_toml_str("contrast.tau = -1.0").is_err());
        assert!(TrainConfig::from_toml_str("train.epochs = 0").is_err());
        assert!(TrainConfig::from_toml_str("train.ablation = \"wo_xx\"").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = TrainConfig::default();
        cfg.curriculum.fixed_ratio = Some(0.25);
        cfg.train.seed = 17;
        let text = cfg.to_toml_string();
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn ablations_fold_into_settings() {
        let mut cfg = TrainConfig::default();
        cfg.train.ablation = Ablation::WoCe;
        assert_eq!(cfg.effective().train.gamma, 0.0);
        cfg.train.ablation = Ablation::WoCl;
        assert!(cfg.effective().aug.random);
        cfg.train.ablation = Ablation::WoCud;
        assert_eq!(cfg.schedule(), Schedule::AllDiscrimination);
        assert_eq!("wo_cud".parse::<Ablation>().unwrap(), Ablation::WoCud);
    }
}
