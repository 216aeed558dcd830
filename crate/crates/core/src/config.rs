//! Run configuration: every module's settings in one TOML document.
//!
//! Keys may be written as sections (`[train]` then `epochs = 5`) or as dotted
//! keys (`train.epochs = 5`). Missing keys take the module defaults; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSettings;
use crate::data::GenConfig;
use crate::decision::VerificationPolicy;
use crate::error::{JamError, Result};
use crate::format::{read_file, to_text};
use crate::loss::LossConfig;
use crate::model::{ModelSpec, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;
const KIND: &str = "config";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub calibration: CalibrationSettings,
    pub policy: VerificationPolicy,
}

impl RunConfig {
    /// Parses a config document layered over the defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = crate::format::parse_plain(text, KIND)?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| JamError::Format {
            kind: KIND,
            field: "<root>".into(),
            message: e.to_string(),
        })?;
        for (key, value) in user {
            if key == "format_version" {
                match value.as_integer() {
                    Some(v) if v == i64::from(CONFIG_VERSION) => continue,
                    Some(v) => {
                        return Err(JamError::UnsupportedVersion {
                            kind: KIND,
                            found: v,
                            supported: CONFIG_VERSION,
                        })
                    }
                    None => {
                        return Err(JamError::Format {
                            kind: KIND,
                            field: key,
                            message: "expected an integer".into(),
                        })
                    }
                }
            }
            merge(&mut merged, key, value);
        }
        // Round-trip through text so that errors carry spans naming the key.
        let cfg: Self = crate::format::parse_plain(&to_text(&merged, KIND)?, KIND)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&read_file(path.as_ref())?)
    }

    pub fn to_toml(&self) -> Result<String> {
        #[derive(Serialize)]
        struct File<'a> {
            format_version: u32,
            #[serde(flatten)]
            config: &'a RunConfig,
        }
        to_text(
            &File {
                format_version: CONFIG_VERSION,
                config: self,
            },
            KIND,
        )
    }

    /// Applies one seed to data generation and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gen.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.calibration.validate()?;
        self.policy.validate()
    }
}

fn merge(into: &mut toml::Table, key: String, value: toml::Value) {
    match (into.get_mut(&key), value) {
        (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => {
            for (k, v) in src {
                merge(dst, k, v);
            }
        }
        (_, value) => {
            into.insert(key, value);
        }
    }
}
