use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{SceneConfig, StyleDomain, TrainConfig};
use crate::sensitivity::{ClusterConfig, PhotometricTransform};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

/// Everything a run needs, in one strict JSON document. Missing keys take
/// their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub photometric: PhotometricTransform,
    pub cluster: ClusterConfig,
    pub scenes: SceneConfig,
    pub source_domain: StyleDomain,
    pub target_domain: StyleDomain,
    pub num_source_scenes: usize,
    pub num_target_scenes: usize,
    pub source_seed: u64,
    pub target_seed: u64,
    /// Dataset directory used by `train`.
    pub source_data: Option<PathBuf>,
    /// Dataset directory evaluated after `train`, when given.
    pub target_data: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            photometric: PhotometricTransform::default(),
            cluster: ClusterConfig::default(),
            scenes: SceneConfig::default(),
            source_domain: StyleDomain::source(),
            target_domain: StyleDomain::target(),
            num_source_scenes: 200,
            num_target_scenes: 100,
            source_seed: 1000,
            target_seed: 5000,
            source_data: None,
            target_data: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text)
            }
            None => {
                let cfg = Self::default();
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.photometric.validate()?;
        self.cluster.validate()?;
        self.scenes.validate()?;
        self.source_domain.validate()?;
        self.target_domain.validate()?;
        if !self.source_domain.disjoint_from(&self.target_domain) {
            return Err(Error::Config(
                "source and target style ranges overlap".into(),
            ));
        }
        if self.train.net.num_classes != self.scenes.num_classes {
            return Err(Error::Config(format!(
                "network has {} classes but scenes have {}",
                self.train.net.num_classes, self.scenes.num_classes
            )));
        }
        if self.num_source_scenes == 0 || self.num_target_scenes == 0 {
            return Err(Error::Config("scene counts must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Writes the fully resolved config into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }
}
