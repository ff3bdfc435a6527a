//! Model files: a JSON descriptor plus a sibling blob of little-endian
//! `f32` weights (`<stem>.bin`) laid out per the descriptor's manifest.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian as LE};
use serde::{Deserialize, Serialize};

use super::HashCheck;
use crate::classifier::{Architecture, CnnModel, Hyper};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "oracle-lab-cnn";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub hyper: Hyper,
    pub tensors: Vec<ManifestEntry>,
    pub weights_file: String,
    pub weights_crc32: u32,
    pub config_hash: Option<String>,
}

impl ModelDescriptor {
    pub fn check_hash(&self, expected: &str) -> HashCheck {
        HashCheck::compare(self.config_hash.as_deref(), expected)
    }
}

fn manifest(arch: &Architecture) -> Vec<ManifestEntry> {
    let mut off = 0;
    arch.tensors()
        .into_iter()
        .map(|t| {
            let e = ManifestEntry {
                offset: off,
                len: t.len(),
                name: t.name,
                shape: t.shape,
            };
            off += e.len;
            e
        })
        .collect()
}

fn blob_path(descriptor: &Path) -> PathBuf {
    descriptor.with_extension("bin")
}

pub fn save_model(path: &Path, model: &CnnModel<f32>, config_hash: Option<&str>) -> Result<()> {
    let mut blob = vec![0u8; 4 * model.params().len()];
    LE::write_f32_into(model.params(), &mut blob);
    let bin = blob_path(path);
    let desc = ModelDescriptor {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        architecture: model.arch,
        hyper: model.hyper,
        tensors: manifest(&model.arch),
        weights_file: bin
            .file_name()
            .expect("file name")
            .to_string_lossy()
            .into_owned(),
        weights_crc32: crc32fast::hash(&blob),
        config_hash: config_hash.map(str::to_string),
    };
    fs::write(&bin, &blob)?;
    fs::write(path, serde_json::to_string_pretty(&desc)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(CnnModel<f32>, ModelDescriptor)> {
    let desc: ModelDescriptor = serde_json::from_slice(&fs::read(path)?)?;
    if desc.format != MODEL_FORMAT || desc.version != MODEL_VERSION {
        return Err(Error::invalid(format!(
            "unsupported model format {} v{}",
            desc.format, desc.version
        )));
    }
    desc.architecture.validate()?;
    if desc.tensors != manifest(&desc.architecture) {
        return Err(Error::ShapeMismatch(
            "tensor manifest does not match the declared architecture".into(),
        ));
    }
    let bin = path.with_file_name(&desc.weights_file);
    let blob = fs::read(&bin)?;
    let expected = 4 * desc.architecture.param_count();
    if blob.len() != expected {
        return Err(Error::Truncated(format!(
            "{} holds {} bytes, manifest needs {expected}",
            bin.display(),
            blob.len()
        )));
    }
    let computed = crc32fast::hash(&blob);
    if computed != desc.weights_crc32 {
        return Err(Error::ChecksumMismatch {
            stored: desc.weights_crc32,
            computed,
        });
    }
    let mut params = vec![0f32; desc.architecture.param_count()];
    LE::read_f32_into(&blob, &mut params);
    let model = CnnModel::from_params(desc.architecture, desc.hyper, params)?;
    Ok((model, desc))
}
