use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::composer::{format_filter_groups, parse_filter_groups, validate_groups, win_groups, ChannelWeights, FilterGroup};
use crate::decomposer::DecompStrategy;
use crate::embeddings::OovPolicy;
use crate::error::{Error, Result};
use crate::matcher::MatchStrategy;

/// Architecture and training hyperparameters. Serialized verbatim into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub match_strategy: MatchStrategy,
    pub decomp: DecompStrategy,
    pub clamp_alpha: bool,
    pub filters: Vec<FilterGroup>,
    pub channels: ChannelWeights,
    pub embedding_dim: usize,
    pub oov_policy: OovPolicy,
    pub lowercase: bool,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ModelConfig {
    /// local-3 matching, orthogonal decomposition, win-3 filters with 500 per window, d = 300.
    fn default() -> Self {
        ModelConfig {
            match_strategy: MatchStrategy::Local { window: 3 },
            decomp: DecompStrategy::Orthogonal,
            clamp_alpha: false,
            filters: win_groups(3, 500),
            channels: ChannelWeights::Shared,
            embedding_dim: 300,
            oov_policy: OovPolicy::HashRandom,
            lowercase: true,
            seed: 42,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.match_strategy.validate()?;
        validate_groups(&self.filters)?;
        if self.decomp == DecompStrategy::Rigid && !self.match_strategy.is_max() {
            return Err(Error::Config(format!(
                "rigid decomposition requires the max matcher, got {}",
                self.match_strategy
            )));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Total number of filters, i.e. the length of one sentence's feature vector.
    pub fn feature_len(&self) -> usize {
        self.filters.iter().map(|g| g.count).sum()
    }

    /// Multiplies every filter count by `scale` (rounded, at least one filter per group).
    pub fn scaled(&self, scale: f64) -> Result<ModelConfig> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        let mut cfg = self.clone();
        for g in &mut cfg.filters {
            g.count = ((g.count as f64 * scale).round() as usize).max(1);
        }
        Ok(cfg)
    }

    /// `key = value` lines, one per field.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_kv() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let (match_kind, window) = match self.match_strategy {
            MatchStrategy::Global => ("global", None),
            MatchStrategy::Local { window } => ("local", Some(window)),
            MatchStrategy::Max => ("max", None),
        };
        let mut kv = vec![("match", match_kind.to_string())];
        if let Some(w) = window {
            kv.push(("window", w.to_string()));
        }
        kv.extend([
            ("decomp", self.decomp.to_string()),
            ("clamp_alpha", self.clamp_alpha.to_string()),
            ("filters", format_filter_groups(&self.filters)),
            ("channels", self.channels.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("oov", self.oov_policy.to_string()),
            ("lowercase", self.lowercase.to_string()),
            ("seed", self.seed.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("frozen_embeddings", "true".to_string()),
        ]);
        kv
    }

    pub fn from_kv_text(text: &str) -> Result<ModelConfig> {
        let map = parse_kv(text)?;
        let mut cfg = ModelConfig::default();
        cfg.apply(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides fields from a key/value map. Unknown keys are errors.
    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        let window = map.get("window").map(|w| parse_num::<usize>("window", w)).transpose()?;
        if let Some(kind) = map.get("match") {
            self.match_strategy = match (kind.as_str(), window) {
                ("local", Some(window)) => MatchStrategy::Local { window },
                (other, _) => other.parse()?,
            };
        } else if let (Some(window), MatchStrategy::Local { .. }) = (window, self.match_strategy) {
            self.match_strategy = MatchStrategy::Local { window };
        }
        for (key, value) in map {
            let value = value.as_str();
            match key.as_str() {
                "match" | "window" => {}
                "decomp" => self.decomp = value.parse()?,
                "clamp_alpha" => self.clamp_alpha = parse_bool(key, value)?,
                "filters" => self.filters = parse_filter_groups(value)?,
                "channels" => self.channels = value.parse()?,
                "embedding_dim" | "dim" => self.embedding_dim = parse_num(key, value)?,
                "oov" => self.oov_policy = value.parse()?,
                "lowercase" => self.lowercase = parse_bool(key, value)?,
                "seed" => self.seed = parse_num(key, value)?,
                "learning_rate" => self.learning_rate = parse_num(key, value)?,
                "batch_size" => self.batch_size = parse_num(key, value)?,
                "epochs" => self.epochs = parse_num(key, value)?,
                "frozen_embeddings" => {
                    if !parse_bool(key, value)? {
                        return Err(Error::Config("only frozen embeddings are supported".into()));
                    }
                }
                other => return Err(Error::Config(format!("unknown model key `{other}`"))),
            }
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_local3_orthogonal_win3() {
        let c = ModelConfig::default();
        assert_eq!(c.match_strategy, MatchStrategy::Local { window: 3 });
        assert_eq!(c.decomp, DecompStrategy::Orthogonal);
        assert_eq!(c.feature_len(), 1500);
        assert_eq!(c.embedding_dim, 300);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = ModelConfig::default();
        c.learning_rate = 0.1 + 0.2;
        c.match_strategy = MatchStrategy::Global;
        c.filters = win_groups(2, 7);
        let back = ModelConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(back, c);
        let c = ModelConfig::default();
        assert_eq!(ModelConfig::from_kv_text(&c.to_kv_text()).unwrap(), c);
    }

    #[test]
    fn rigid_requires_max() {
        let c = ModelConfig {
            decomp: DecompStrategy::Rigid,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            match_strategy: MatchStrategy::Max,
            ..c
        };
        c.validate().unwrap();
    }

    #[test]
    fn window_override_keeps_local() {
        let mut c = ModelConfig::default();
        c.apply(&parse_kv("window = 1").unwrap()).unwrap();
        assert_eq!(c.match_strategy, MatchStrategy::Local { window: 1 });
        c.apply(&parse_kv("match = max\nwindow = 2").unwrap()).unwrap();
        assert_eq!(c.match_strategy, MatchStrategy::Max);
    }

    #[test]
    fn bad_keys_and_values() {
        let mut c = ModelConfig::default();
        assert!(c.apply(&parse_kv("color = red").unwrap()).is_err());
        assert!(c.apply(&parse_kv("epochs = many").unwrap()).is_err());
        assert!(c.apply(&parse_kv("frozen_embeddings = false").unwrap()).is_err());
        assert!(parse_kv("just words").is_err());
    }

    #[test]
    fn scaling_filter_counts() {
        let c = ModelConfig::default().scaled(0.1).unwrap();
        assert_eq!(c.feature_len(), 150);
        let c = ModelConfig::default().scaled(1e-6).unwrap();
        assert_eq!(c.feature_len(), 3);
        assert!(ModelConfig::default().scaled(0.0).is_err());
    }
}
