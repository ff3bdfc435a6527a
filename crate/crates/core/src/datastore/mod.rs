//! Run configuration and on-disk artifacts.

mod config;
mod dataset;
mod model_io;

pub use config::{
    CalibrationConfig, ChannelConfig, ClassifierConfig, DeviceConfig, LevelGrid, LinkConfig,
    PlannerConfig, RunConfig, SCHEMA_VERSION,
};
pub use dataset::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, Dataset, DatasetRecord,
    FORMAT_VERSION, MAGIC,
};
pub use model_io::{
    load_model, save_model, ManifestEntry, ModelDescriptor, MODEL_FORMAT, MODEL_VERSION,
};

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Result;

/// Outcome of comparing an artifact's recorded config hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HashCheck {
    Match,
    Mismatch { found: String },
    Missing,
}

impl HashCheck {
    pub fn compare(found: Option<&str>, expected: &str) -> Self {
        match found {
            Some(h) if h == expected => HashCheck::Match,
            Some(h) => HashCheck::Mismatch {
                found: h.to_string(),
            },
            None => HashCheck::Missing,
        }
    }

    pub fn is_match(&self) -> bool {
        *self == HashCheck::Match
    }
}

/// JSON document stamped with the producing config's hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: Option<String>,
    pub body: T,
}

impl<T> Artifact<T> {
    pub fn check_hash(&self, expected: &str) -> HashCheck {
        HashCheck::compare(self.config_hash.as_deref(), expected)
    }
}

pub fn save_json<T: Serialize>(path: &Path, body: &T, config_hash: Option<&str>) -> Result<()> {
    let doc = Artifact {
        config_hash: config_hash.map(str::to_string),
        body,
    };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
