use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Which parameters a training run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Parameters after the final step.
    #[default]
    Last,
    /// Parameters at the end of the epoch with the lowest dev EER.
    BestDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub select: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            checkpoint_every: 0,
            select: Selection::Last,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        // lr = 0 is allowed: it freezes the model, which is useful for checks
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            problems.push(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        for (name, b) in [("betas.0", self.betas.0), ("betas.1", self.betas.1)] {
            if !(b > 0.0 && b < 1.0) {
                problems.push(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            problems.push(format!("eps must be positive, got {}", self.eps));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Model and training configuration of one run, as stored in config files
/// and run metadata: `{"model": {...}, "train": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// Sets both the initialization and the data-order seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
    }

    /// Applies `key=value` overrides with dotted paths, e.g.
    /// `train.lr=0` or `model.head_kind=baseline_vit`. Values parse as JSON
    /// and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut tree;
            for part in key.split('.') {
                node = node
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
            }
            *node = value;
        }
        let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadKind;

    #[test]
    fn overrides_follow_dotted_paths() {
        let base = RunConfig::default();
        let cfg = base
            .with_overrides(&["train.lr=0", "model.head_kind=baseline_vit", "train.betas=[0.8,0.99]"])
            .unwrap();
        assert_eq!(cfg.train.lr, 0.0);
        assert_eq!(cfg.model.head_kind, HeadKind::BaselineVit);
        assert_eq!(cfg.train.betas, (0.8, 0.99));
        assert!(base.with_overrides(&["train.nope=1"]).is_err());
        assert!(base.with_overrides(&["train.lr"]).is_err());
        assert!(base.with_overrides(&["train.lr=-1"]).is_err());
        assert!(base.with_overrides(&["model.head_kind=mystery"]).is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"train": {"epochs": 3}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.model, ModelConfig::default());
        assert!(RunConfig::from_json(r#"{"train": {"betas": [1.0, 0.9]}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"extra": 1}"#).is_err());
    }
}
