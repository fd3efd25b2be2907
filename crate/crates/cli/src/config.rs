use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use colink::index::DecodeConfig;
use colink::{ContextConfig, EncoderConfig, Error, LinkMode, Result, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

/// File locations. Relative paths resolve against the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub kb: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Everything a run needs. Loaded from TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    /// Unset means collective for training and the checkpoint's mode for
    /// linking.
    pub mode: Option<LinkMode>,
    /// Overrides `encoder.seed` and `train.seed` when set.
    pub seed: Option<u64>,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub context: ContextConfig,
    pub decode: DecodeConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            mode: None,
            seed: None,
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            context: ContextConfig::default(),
            decode: DecodeConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Built-in defaults, or the file at `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Copies the top-level seed into the sections that consume one.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.encoder.seed = s;
            self.train.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.decode.validate()?;
        if self.mode.is_some_and(LinkMode::is_end_to_end) && self.decode.max_span_len > self.context.max_tokens {
            return Err(Error::Config("decode.max_span_len exceeds context.max_tokens".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `value` of a required path, or a config error naming the flag and key.
pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("missing path: pass --{flag} or set paths.{key}")))
}

/// Existence check for every path an operation will read.
pub fn check_exists(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::Config(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}
