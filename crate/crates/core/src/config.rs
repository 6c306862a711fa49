//! Resolved pipeline settings: defaults, then a TOML file, then `RAVEN_*`
//! environment variables, then command-line flags (last wins).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{AblationMode, AugmentConfig, Task, DEFAULT_MAX_SOURCE_LENGTH, DEFAULT_SEPARATOR};
use crate::decode::{BeamConfig, DEFAULT_BEAM};
use crate::index::DEFAULT_TOP_K;
use crate::retriever::{RetrievalConfig, SearchBackend, DEFAULT_DEDUP_THRESHOLD};

pub const ENV_PREFIX: &str = "RAVEN_";
pub const DEFAULT_MODE: &str = "top_caption_all_captions";
pub const DEFAULT_NLIST: usize = 16;
pub const DEFAULT_NPROBE: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{key}: cannot parse {value:?}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{key}: {reason}")]
    OutOfRange { key: &'static str, reason: String },
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexBackend {
    #[default]
    Exact,
    Ivf,
}

impl fmt::Display for IndexBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexBackend::Exact => "exact",
            IndexBackend::Ivf => "ivf",
        })
    }
}

impl FromStr for IndexBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(IndexBackend::Exact),
            "ivf" => Ok(IndexBackend::Ivf),
            other => Err(format!("expected exact or ivf, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub store: Option<PathBuf>,
    pub backend: IndexBackend,
    pub nlist: usize,
    pub nprobe: usize,
    pub top_k: usize,
    pub dedup_threshold: f64,
    pub max_source_length: usize,
    pub mode: String,
    pub separator: String,
    pub beam: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            store: None,
            backend: IndexBackend::Exact,
            nlist: DEFAULT_NLIST,
            nprobe: DEFAULT_NPROBE,
            top_k: DEFAULT_TOP_K,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            max_source_length: DEFAULT_MAX_SOURCE_LENGTH,
            mode: DEFAULT_MODE.to_owned(),
            separator: DEFAULT_SEPARATOR.to_owned(),
            beam: DEFAULT_BEAM,
            seed: 0,
            threads: None,
        }
    }
}

/// A sparse layer of settings. Unknown keys are rejected when parsed from
/// TOML.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub store: Option<PathBuf>,
    pub backend: Option<IndexBackend>,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub top_k: Option<usize>,
    pub dedup_threshold: Option<f64>,
    pub max_source_length: Option<usize>,
    pub mode: Option<String>,
    pub separator: Option<String>,
    pub beam: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

impl ConfigLayer {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::File {
            path: path.to_owned(),
            message: e.message().to_owned(),
        })
    }

    pub fn read_toml(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    /// Picks up `RAVEN_<KEY>` variables for the known keys; other variables
    /// are ignored.
    pub fn from_env<I, K, V>(vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut layer = Self::default();
        for (k, v) in vars {
            if let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) {
                layer.set(&key.to_ascii_lowercase(), v.as_ref())?;
            }
        }
        Ok(layer)
    }

    /// Sets one key from its textual form. Returns `Ok(false)` for a key
    /// that is not a config setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "store" => self.store = Some(PathBuf::from(value)),
            "backend" => self.backend = Some(parse(key, value)?),
            "nlist" => self.nlist = Some(parse(key, value)?),
            "nprobe" => self.nprobe = Some(parse(key, value)?),
            "top_k" => self.top_k = Some(parse(key, value)?),
            "dedup_threshold" => self.dedup_threshold = Some(parse(key, value)?),
            "max_source_length" => self.max_source_length = Some(parse(key, value)?),
            "mode" => self.mode = Some(value.to_owned()),
            "separator" => self.separator = Some(value.to_owned()),
            "beam" => self.beam = Some(parse(key, value)?),
            "seed" => self.seed = Some(parse(key, value)?),
            "threads" => self.threads = Some(parse(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn apply(&self, config: &mut PipelineConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { config.$field = v.clone(); })*
            };
        }
        take!(backend, nlist, nprobe, top_k, dedup_threshold, max_source_length, mode, separator, beam, seed);
        if self.store.is_some() {
            config.store = self.store.clone();
        }
        if self.threads.is_some() {
            config.threads = self.threads;
        }
    }
}

impl PipelineConfig {
    /// Layers are applied in order, so later ones win.
    pub fn resolve<'a>(layers: impl IntoIterator<Item = &'a ConfigLayer>) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for layer in layers {
            layer.apply(&mut config);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: usize| {
            if v == 0 {
                Err(ConfigError::OutOfRange {
                    key,
                    reason: "must be at least 1".into(),
                })
            } else {
                Ok(())
            }
        };
        positive("nlist", self.nlist)?;
        positive("nprobe", self.nprobe)?;
        positive("top_k", self.top_k)?;
        positive("max_source_length", self.max_source_length)?;
        positive("beam", self.beam)?;
        if let Some(t) = self.threads {
            positive("threads", t)?;
        }
        if self.nprobe > self.nlist {
            return Err(ConfigError::OutOfRange {
                key: "nprobe",
                reason: format!("{} exceeds nlist {}", self.nprobe, self.nlist),
            });
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "dedup_threshold",
                reason: format!("{} is outside (0, 1]", self.dedup_threshold),
            });
        }
        let known = [Task::Captioning, Task::Vqa]
            .iter()
            .any(|&t| AblationMode::names(t).contains(&self.mode.as_str()));
        if !known {
            return Err(ConfigError::UnknownMode(self.mode.clone()));
        }
        Ok(())
    }

    pub fn ablation_mode(&self, task: Task) -> Result<AblationMode, ConfigError> {
        AblationMode::named(task, &self.mode).map_err(|_| ConfigError::UnknownMode(format!("{} (task {task})", self.mode)))
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            top_k: self.top_k,
            dedup_threshold: self.dedup_threshold,
            backend: match self.backend {
                IndexBackend::Exact => SearchBackend::Exact,
                IndexBackend::Ivf => SearchBackend::Ivf { nprobe: self.nprobe },
            },
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            separator: self.separator.clone(),
            max_source_length: self.max_source_length,
            ..AugmentConfig::default()
        }
    }

    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig::with_beam(self.beam)
    }

    /// Writes the resolved settings next to an output as
    /// `<output>.config.json`.
    pub fn write_sidecar(&self, output: &Path) -> std::io::Result<PathBuf> {
        let mut name = output.as_os_str().to_owned();
        name.push(".config.json");
        let path = PathBuf::from(name);
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!((c.top_k, c.max_source_length, c.beam), (50, 600, 5));
        assert_eq!(c.dedup_threshold, 0.95);
    }

    #[test]
    fn later_layers_win() {
        let file = ConfigLayer::from_toml("top_k = 10\nbackend = \"ivf\"\nnprobe = 2\n", Path::new("c.toml")).unwrap();
        let env = ConfigLayer::from_env([("RAVEN_TOP_K", "20"), ("HOME", "/x"), ("RAVEN_BEAM", "3")]).unwrap();
        let flags = ConfigLayer {
            top_k: Some(30),
            ..ConfigLayer::default()
        };
        let c = PipelineConfig::resolve([&file, &env, &flags]).unwrap();
        assert_eq!(c.top_k, 30);
        assert_eq!(c.beam, 3);
        assert_eq!(c.retrieval().backend, SearchBackend::Ivf { nprobe: 2 });
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ConfigLayer::from_toml("colour = 1", Path::new("c.toml")),
            Err(ConfigError::File { .. })
        ));
        assert!(matches!(
            ConfigLayer::from_env([("RAVEN_TOP_K", "many")]),
            Err(ConfigError::BadValue { .. })
        ));
        let layer = ConfigLayer {
            mode: Some("mirror".into()),
            ..ConfigLayer::default()
        };
        assert!(matches!(PipelineConfig::resolve([&layer]), Err(ConfigError::UnknownMode(_))));
        let layer = ConfigLayer {
            nprobe: Some(40),
            ..ConfigLayer::default()
        };
        assert!(matches!(PipelineConfig::resolve([&layer]), Err(ConfigError::OutOfRange { key: "nprobe", .. })));
        let layer = ConfigLayer {
            dedup_threshold: Some(0.0),
            ..ConfigLayer::default()
        };
        assert!(PipelineConfig::resolve([&layer]).is_err());
    }

    #[test]
    fn mode_checked_per_task() {
        let layer = ConfigLayer {
            mode: Some("image".into()),
            ..ConfigLayer::default()
        };
        let c = PipelineConfig::resolve([&layer]).unwrap();
        assert!(c.ablation_mode(Task::Captioning).is_ok());
        assert!(c.ablation_mode(Task::Vqa).is_err());
    }
}
