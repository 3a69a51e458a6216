//! JSON model files.
//!
//! ```text
//! { "format_version": 1, "filter_size": r, "num_filters": N, "num_stages": T,
//!   "sigma_grid": [...], "rbf": { "num_centers", "center_min", "center_max", "bandwidth" },
//!   "stages": [ { "filter_coeffs": [[...]], "rbf_weights": [[...]], "log_lambda": [...] } ],
//!   "reaction": false }
//! ```
//!
//! `reaction` is written only for models trained without the reaction term
//! and defaults to `true`. Floats use the shortest representation that
//! parses back to the same bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GenericDPModel, ModelConfig, RbfConfig, RbfMixture, Stage};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StageFile {
    filter_coeffs: Vec<Vec<f64>>,
    rbf_weights: Vec<Vec<f64>>,
    log_lambda: Vec<f64>,
}

fn is_true(b: &bool) -> bool {
    *b
}

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    filter_size: usize,
    num_filters: usize,
    num_stages: usize,
    sigma_grid: Vec<f64>,
    rbf: RbfConfig,
    stages: Vec<StageFile>,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    reaction: bool,
}

pub fn to_json(model: &GenericDPModel) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        filter_size: model.filter_size(),
        num_filters: model.num_filters(),
        num_stages: model.num_stages(),
        sigma_grid: model.sigma_grid().to_vec(),
        rbf: model.rbf_config(),
        stages: model
            .stages()
            .iter()
            .map(|s| StageFile {
                filter_coeffs: s.filter_coeffs.clone(),
                rbf_weights: s.influence.iter().map(|p| p.weights.clone()).collect(),
                log_lambda: s.log_lambda.clone(),
            })
            .collect(),
        reaction: model.reaction_enabled(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model parameters are finite");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<GenericDPModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::format("model file", e.to_string()))?;
    // check the version before the schema so old/new files get a clear error
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Version {
                found: v as u32,
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(Error::format("model file", "missing format_version")),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::format("model file", e.to_string()))?;
    let config = ModelConfig {
        num_stages: file.num_stages,
        filter_size: file.filter_size,
        num_filters: file.num_filters,
        sigma_grid: file.sigma_grid,
        rbf: file.rbf,
    };
    config.validate()?;
    let stages = file
        .stages
        .into_iter()
        .enumerate()
        .map(|(t, s)| {
            let influence = s
                .rbf_weights
                .into_iter()
                .map(|w| RbfMixture::new(config.rbf, w))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::InvalidModel(format!("stage {}: {e}", t + 1)))?;
            Ok(Stage {
                filter_coeffs: s.filter_coeffs,
                influence,
                log_lambda: s.log_lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GenericDPModel::from_stages(&config, stages, file.reaction)
}

pub fn serialize(model: &GenericDPModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn deserialize(path: impl AsRef<Path>) -> Result<GenericDPModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
