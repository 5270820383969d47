//! Versioned JSON model checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so parameters survive a save/load cycle bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use fedload_core::models::{DisaggModel, ForecastModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

pub const FORMAT_VERSION: u32 = 1;

/// A forecaster and the channel it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterCheckpoint {
    pub channel: String,
    pub model: ForecastModel,
}

/// Per-appliance disaggregation models of one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisaggregatorCheckpoint {
    pub household: String,
    pub models: BTreeMap<String, DisaggModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Forecaster(ForecasterCheckpoint),
    Disaggregator(DisaggregatorCheckpoint),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    #[serde(flatten)]
    body: Checkpoint,
}

#[derive(Deserialize)]
struct VersionOnly {
    format_version: u32,
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Forecaster(_) => "forecaster",
            Checkpoint::Disaggregator(_) => "disaggregator",
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&Envelope {
            format_version: FORMAT_VERSION,
            body: self.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json().map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = read_text(path)?;
        let json_err = |source| Error::Json {
            path: path.to_path_buf(),
            source,
        };
        let version: VersionOnly = serde_json::from_str(&text).map_err(json_err)?;
        if version.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!(
                    "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                    version.format_version
                ),
            ));
        }
        let env: Envelope = serde_json::from_str(&text).map_err(json_err)?;
        Ok(env.body)
    }

    pub fn into_forecaster(self, path: &Path) -> Result<ForecasterCheckpoint> {
        match self {
            Checkpoint::Forecaster(f) => {
                // rejects parameter trees that do not match the config
                ForecastModel::from_params(f.model.config.clone(), f.model.params.clone()).map_err(|source| {
                    Error::File {
                        path: path.to_path_buf(),
                        source,
                    }
                })?;
                Ok(f)
            }
            other => Err(Error::format(path, format!("expected a forecaster checkpoint, found {}", other.kind()))),
        }
    }
}
