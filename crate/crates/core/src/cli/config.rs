use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::UsageError;
use crate::sampler::SamplerConfig;
use crate::task::{TaskKind, TaskSpec};
use crate::train::TrainConfig;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub generate_data: Option<toml::Table>,
    pub train: Option<toml::Table>,
    pub decode: Option<toml::Table>,
    pub bench: Option<toml::Table>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Starts from `T::default()` and applies the keys present in `table`, merging
/// nested tables key by key.
pub(crate) fn from_table<T: Serialize + DeserializeOwned + Default>(
    table: Option<&toml::Table>,
    name: &str,
) -> anyhow::Result<T> {
    let Some(table) = table else {
        return Ok(T::default());
    };
    let mut base = toml::Table::try_from(T::default())?;
    merge(&mut base, table);
    base.try_into()
        .map_err(|e| UsageError(format!("config table [{name}]: {e}")).into())
}

fn merge(base: &mut toml::Table, overlay: &toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub kind: TaskKind,
    pub vocab: usize,
    pub n: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
    pub frames_per_token: usize,
    /// `None` uses the content vocabulary size.
    pub feature_dim: Option<usize>,
    pub transition_strength: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 8, (4, 16), 0.2);
        Self {
            kind: spec.kind,
            vocab: spec.content_vocab_size,
            n: 1000,
            min_len: spec.length_range.0,
            max_len: spec.length_range.1,
            noise: spec.channel_noise,
            frames_per_token: spec.frames_per_token,
            feature_dim: None,
            transition_strength: spec.transition_strength,
            jitter: spec.jitter,
            seed: 0,
        }
    }
}

impl GenerateConfig {
    pub fn task_spec(&self) -> TaskSpec {
        let mut spec = TaskSpec::new(self.kind, self.vocab, (self.min_len, self.max_len), self.noise).with_seed(self.seed);
        spec.frames_per_token = self.frames_per_token;
        spec.feature_dim = self.feature_dim.unwrap_or(self.vocab);
        spec.transition_strength = self.transition_strength;
        spec.jitter = self.jitter;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub data: Option<PathBuf>,
    pub split: String,
    pub d_model: usize,
    pub hidden_layers: usize,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            data: None,
            split: "train".into(),
            d_model: 64,
            hidden_layers: 2,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub data: Option<PathBuf>,
    pub split: String,
    pub checkpoint: Option<PathBuf>,
    pub oracle: bool,
    /// `max_len` of zero means "derive from the checkpoint or task".
    pub sampler: SamplerConfig,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            data: None,
            split: "test".into(),
            checkpoint: None,
            oracle: false,
            sampler: SamplerConfig {
                max_len: 0,
                ..SamplerConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub data: Option<PathBuf>,
    pub split: String,
    pub checkpoint: Option<PathBuf>,
    pub oracle: bool,
    pub samplers: Vec<String>,
    pub sweep_nfe: Vec<usize>,
    pub compare_ar: bool,
    pub svg: bool,
    /// Shared sampler settings; `kind` and `max_nfe` are swept.
    pub sampler: SamplerConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            data: None,
            split: "test".into(),
            checkpoint: None,
            oracle: false,
            samplers: crate::sampler::SamplerKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            sweep_nfe: vec![32],
            compare_ar: false,
            svg: false,
            sampler: SamplerConfig {
                max_len: 0,
                ..SamplerConfig::default()
            },
        }
    }
}

pub(crate) fn write_resolved<T: Serialize>(dir: &Path, config: &T) -> anyhow::Result<()> {
    let path = dir.join(RESOLVED_CONFIG_FILE);
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
