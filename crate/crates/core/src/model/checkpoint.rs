//! Model checkpoint files. See `docs/formats.md` for the schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, Model, ModelParams, ModelSpec, TrainConfig};
use crate::error::{JamError, Result};
use crate::format::{parse_versioned, read_file, to_text, write_file};
use crate::loss::LossConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const KIND: &str = "checkpoint";

/// A model together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub loss: LossConfig,
    pub train: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    spec: ModelSpec,
    loss: LossConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train: Option<TrainConfig>,
    layers: Vec<Layer>,
}

pub fn write_model(checkpoint: &Checkpoint) -> Result<String> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        spec: checkpoint.model.spec().clone(),
        loss: checkpoint.loss,
        train: checkpoint.train.clone(),
        layers: checkpoint.model.params().layers.clone(),
    };
    to_text(&file, KIND)
}

pub fn read_model(text: &str) -> Result<Checkpoint> {
    let file: CheckpointFile = parse_versioned(text, KIND, CHECKPOINT_VERSION)?;
    let shape_err = |e: JamError| match e {
        JamError::InvalidConfig(m) | JamError::Shape(m) => JamError::Format {
            kind: KIND,
            field: "layers".into(),
            message: m,
        },
        JamError::NonFinite { what, index, value } => JamError::Format {
            kind: KIND,
            field: "layers".into(),
            message: format!("{what}[{index}] = {value}"),
        },
        other => other,
    };
    file.loss.validate().map_err(|e| JamError::Format {
        kind: KIND,
        field: "loss".into(),
        message: e.to_string(),
    })?;
    let model = Model::new(
        file.spec,
        ModelParams {
            layers: file.layers,
        },
    )
    .map_err(shape_err)?;
    Ok(Checkpoint {
        model,
        loss: file.loss,
        train: file.train,
    })
}

pub fn save_model(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    write_file(path.as_ref(), &write_model(checkpoint)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_model(&read_file(path.as_ref())?)
}
