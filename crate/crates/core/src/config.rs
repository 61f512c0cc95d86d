//! Model and training hyperparameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Fism,
    Nais,
    FlaNais,
    DeepIcf,
    FlaDicf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Fism,
        ModelKind::Nais,
        ModelKind::FlaNais,
        ModelKind::DeepIcf,
        ModelKind::FlaDicf,
    ];

    pub fn is_feature_level(self) -> bool {
        matches!(self, ModelKind::FlaNais | ModelKind::FlaDicf)
    }

    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::DeepIcf | ModelKind::FlaDicf)
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, ModelKind::Fism)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fism => "FISM",
            ModelKind::Nais => "NAIS",
            ModelKind::FlaNais => "FLA_NAIS",
            ModelKind::DeepIcf => "DEEPICF",
            ModelKind::FlaDicf => "FLA_DICF",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "FISM" => Ok(ModelKind::Fism),
            "NAIS" => Ok(ModelKind::Nais),
            "FLA_NAIS" | "FLANAIS" => Ok(ModelKind::FlaNais),
            "DEEPICF" | "DEEP_ICF" => Ok(ModelKind::DeepIcf),
            "FLA_DICF" | "FLADICF" => Ok(ModelKind::FlaDicf),
            _ => Err(Error::Config(format!("unknown model kind `{s}`"))),
        }
    }
}

/// How item-level and feature-level attention are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    /// Per-item feature softmax scaled by a smoothed item-level weight.
    Design1,
    /// Smoothed softmax over history items, separately for every feature.
    Design2,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Design1 => "1",
            Design::Design2 => "2",
        })
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "1" | "DESIGN1" => Ok(Design::Design1),
            "2" | "DESIGN2" => Ok(Design::Design2),
            _ => Err(Error::Config(format!("unknown design `{s}`"))),
        }
    }
}

/// Input encoding of the item-level attention network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttentionMode {
    /// Element-wise product `p ⊙ q`.
    Prod,
    /// Concatenation `[p; q]`; only meaningful for NAIS.
    Concat,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::Prod => "prod",
            AttentionMode::Concat => "concat",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prod" => Ok(AttentionMode::Prod),
            "concat" => Ok(AttentionMode::Concat),
            _ => Err(Error::Config(format!("unknown attention mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub design: Design,
    pub attention_mode: AttentionMode,
    /// Embedding size.
    pub d: usize,
    /// Hidden size of the attention network.
    pub d_prime: usize,
    /// Exponent applied to the softmax denominator.
    pub beta: f64,
    /// FISM history-length normalization exponent.
    pub alpha: f64,
    /// Hidden layer widths of the deep interaction tower.
    pub deep_layers: Vec<usize>,
}

impl ModelConfig {
    /// Defaults: `d_prime = d`, `beta = 0.7`, Design 2, product attention,
    /// and a halving two-layer tower `[d, d/2]`.
    pub fn new(kind: ModelKind, d: usize) -> Self {
        ModelConfig {
            kind,
            design: Design::Design2,
            attention_mode: AttentionMode::Prod,
            d,
            d_prime: d,
            beta: 0.7,
            alpha: 0.5,
            deep_layers: default_deep_layers(d),
        }
    }

    pub fn with_design(mut self, design: Design) -> Self {
        self.design = design;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.d_prime == 0 {
            return Err(Error::Config("d_prime must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.kind.is_deep() {
            if self.deep_layers.is_empty() {
                return Err(Error::Config("deep_layers must be nonempty for the DeepICF family".into()));
            }
            if self.deep_layers.contains(&0) {
                return Err(Error::Config("deep layer widths must be positive".into()));
            }
        }
        if self.attention_mode == AttentionMode::Concat && self.kind != ModelKind::Nais {
            return Err(Error::Config(format!(
                "concat attention is only defined for NAIS, not {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Whether the item-level output vector `h` is a trainable of this model.
    pub fn uses_item_output(&self) -> bool {
        match self.kind {
            ModelKind::Fism => false,
            ModelKind::Nais | ModelKind::DeepIcf => true,
            ModelKind::FlaNais | ModelKind::FlaDicf => self.design == Design::Design1,
        }
    }

    /// Whether the feature-level output matrix `H` is a trainable of this model.
    pub fn uses_feature_output(&self) -> bool {
        self.kind.is_feature_level()
    }

    /// Number of columns of the attention input matrix `W`.
    pub fn attention_input_width(&self) -> usize {
        match self.attention_mode {
            AttentionMode::Prod => self.d,
            AttentionMode::Concat => 2 * self.d,
        }
    }
}

pub fn default_deep_layers(d: usize) -> Vec<usize> {
    vec![d, (d / 2).max(1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// ℓ2 coefficient.
    pub lambda: f64,
    /// Negatives sampled per training positive.
    pub neg_ratio: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation HR@10 improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub adagrad_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            lambda: 1e-6,
            neg_ratio: 4,
            epochs: 40,
            seed: 0,
            early_stop_patience: 10,
            adagrad_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.neg_ratio == 0 {
            return Err(Error::Config("neg_ratio must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.adagrad_epsilon > 0.0) {
            return Err(Error::Config(format!(
                "adagrad_epsilon must be positive, got {}",
                self.adagrad_epsilon
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kind_names() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("bpr".parse::<ModelKind>().is_err());
    }

    #[test]
    fn rejects_out_of_range_beta() {
        let cfg = ModelConfig::new(ModelKind::FlaNais, 16).with_beta(1.5);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ModelConfig::new(ModelKind::FlaNais, 16).with_beta(0.0);
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::new(ModelKind::FlaNais, 16).with_beta(1.0).validate().is_ok());
    }

    #[test]
    fn deep_family_needs_layers() {
        let mut cfg = ModelConfig::new(ModelKind::DeepIcf, 8);
        assert_eq!(cfg.deep_layers, vec![8, 4]);
        cfg.deep_layers.clear();
        assert!(cfg.validate().is_err());
        let mut nais = ModelConfig::new(ModelKind::Nais, 8);
        nais.deep_layers.clear();
        assert!(nais.validate().is_ok());
    }

    #[test]
    fn concat_only_for_nais() {
        let mut cfg = ModelConfig::new(ModelKind::FlaNais, 8);
        cfg.attention_mode = AttentionMode::Concat;
        assert!(cfg.validate().is_err());
        cfg.kind = ModelKind::Nais;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.attention_input_width(), 16);
    }

    #[test]
    fn train_config_defaults_are_valid() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.neg_ratio, 4);
        assert!(cfg.validate().is_ok());
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
