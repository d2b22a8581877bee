//! Flat `key = value` configuration files. Together with the seeds a config
//! fully determines a run; its canonical form is hashed into every report.

use dgdm_core::denoiser::ModelDims;
use dgdm_core::graph::TriggerSpec;
use dgdm_core::schedule::ScheduleKind;
use dgdm_core::training::ExperimentConfig;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?} as {ty}")]
    BadValue { key: String, value: String, ty: &'static str },
    #[error("invalid trigger: {0}")]
    BadTrigger(String),
}

const KNOWN_KEYS: &[&str] = &[
    "profile",
    "node_types",
    "edge_types",
    "max_n",
    "poison_rate_pct",
    "mixing_ratio",
    "t_steps",
    "schedule",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "epochs",
    "seed",
    "persistent_trigger",
    "trigger_size",
    "trigger_shape",
    "trigger_node_type",
    "trigger_edge_type",
    "connector_edges",
    "connector_type",
    "model_layers",
    "model_h_node",
    "model_h_edge",
    "model_heads",
    "finetune_learning_rate",
    "finetune_epochs",
    "checkpoint_every",
    "sample_count",
];

/// Parsed key/value map with canonicalization and typed getters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Malformed { line: idx + 1, text: raw.to_string() });
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey(key));
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T, ty: &'static str) -> Result<T, ConfigError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                ty,
            }),
        }
    }

    /// Sorted `key = value` text; the canonical form behind the fingerprint.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Dataset-level type counts.
    pub fn type_counts(&self) -> Result<(usize, usize), ConfigError> {
        Ok((
            self.parse_or("node_types", 4usize, "usize")?,
            self.parse_or("edge_types", 4usize, "usize")?,
        ))
    }

    pub fn max_n(&self) -> Result<usize, ConfigError> {
        self.parse_or("max_n", 9usize, "usize")
    }

    pub fn sample_count(&self) -> Result<usize, ConfigError> {
        self.parse_or("sample_count", 300usize, "usize")
    }

    pub fn checkpoint_every(&self) -> Result<usize, ConfigError> {
        self.parse_or("checkpoint_every", 0usize, "usize")
    }

    /// Assembles the full experiment config, applying the desk or full
    /// profile defaults first and explicit keys on top.
    pub fn to_experiment_config(&self) -> Result<ExperimentConfig, ConfigError> {
        let (a, d) = self.type_counts()?;
        let profile = self.values.get("profile").map(String::as_str).unwrap_or("desk");
        let (default_t, default_epochs) = match profile {
            "full" => (500usize, 100usize),
            _ => (50usize, 12usize),
        };

        let trigger_size = self.parse_or("trigger_size", 3usize, "usize")?;
        let trigger_node_type = self.parse_or("trigger_node_type", 2usize, "usize")?;
        let trigger_edge_type = self.parse_or("trigger_edge_type", d.saturating_sub(1), "usize")?;
        let connector_edges = self.parse_or("connector_edges", 3usize, "usize")?;
        let connector_type = self.parse_or("connector_type", 1usize, "usize")?;
        let trigger = match self.values.get("trigger_shape").map(String::as_str) {
            None | Some("chain") => TriggerSpec::triple_bond_chain(
                a,
                d,
                trigger_node_type,
                trigger_edge_type,
                trigger_size,
                connector_edges,
                connector_type,
            ),
            Some("cycle") => TriggerSpec::triple_bond_cycle(
                a,
                d,
                trigger_node_type,
                trigger_edge_type,
                trigger_size,
                connector_edges,
                connector_type,
            ),
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "trigger_shape".into(),
                    value: other.to_string(),
                    ty: "chain|cycle",
                })
            }
        }
        .map_err(|e| ConfigError::BadTrigger(e.to_string()))?;

        let schedule = match self.values.get("schedule").map(String::as_str) {
            None | Some("cosine") => ScheduleKind::Cosine,
            Some("linear") => ScheduleKind::Linear,
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "schedule".into(),
                    value: other.to_string(),
                    ty: "cosine|linear",
                })
            }
        };

        let model = ModelDims {
            a,
            d,
            layers: self.parse_or("model_layers", 2usize, "usize")?,
            h_node: self.parse_or("model_h_node", 32usize, "usize")?,
            h_edge: self.parse_or("model_h_edge", 16usize, "usize")?,
            heads: self.parse_or("model_heads", 2usize, "usize")?,
            max_n: self.max_n()?,
        };

        Ok(ExperimentConfig {
            poison_rate_pct: self.parse_or("poison_rate_pct", 5.0f64, "f64")?,
            mixing_ratio: self.parse_or("mixing_ratio", 0.5f64, "f64")?,
            t_steps: self.parse_or("t_steps", default_t, "usize")?,
            schedule,
            batch_size: self.parse_or("batch_size", 32usize, "usize")?,
            learning_rate: self.parse_or("learning_rate", 2e-4f64, "f64")?,
            beta1: self.parse_or("beta1", 0.9f64, "f64")?,
            beta2: self.parse_or("beta2", 0.999f64, "f64")?,
            eps: self.parse_or("eps", 1e-8f64, "f64")?,
            weight_decay: self.parse_or("weight_decay", 1e-6f64, "f64")?,
            epochs: self.parse_or("epochs", default_epochs, "usize")?,
            seed: self.parse_or("seed", 1u64, "u64")?,
            persistent_trigger: self.parse_or("persistent_trigger", true, "bool")?,
            trigger,
            model,
            finetune_learning_rate: self.parse_or("finetune_learning_rate", 2e-5f64, "f64")?,
            finetune_epochs: self.parse_or("finetune_epochs", 0usize, "usize")?,
        })
    }
}
