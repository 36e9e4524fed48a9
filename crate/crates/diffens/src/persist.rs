//! Versioned JSON persistence for trained models and run manifests.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use diffens_core::forest_vp::ForestVpModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model document: the trained level forests plus the schedule, grid,
/// scaler and config echo they were built with.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model: ForestVpModel,
}

pub fn save_model(path: &Path, model: &ForestVpModel) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(
        &mut writer,
        &ModelBundle {
            format_version: MODEL_FORMAT_VERSION,
            model: model.clone(),
        },
    )?;
    writer.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForestVpModel> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let bundle: ModelBundle = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    if bundle.format_version != MODEL_FORMAT_VERSION {
        bail!(
            "{}: unsupported model format version {} (expected {})",
            path.display(),
            bundle.format_version,
            MODEL_FORMAT_VERSION
        );
    }
    Ok(bundle.model)
}

/// What produced an output directory: config echo, tool version, input hash.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the input data file.
    pub data_sha256: String,
    /// TOML echo of the effective configuration.
    pub config: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, data_sha256: String, config: String) -> Self {
        RunManifest {
            format_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            data_sha256,
            config,
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_encode(&hasher.finalize()))
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffens_core::dataset::Dataset;
    use diffens_core::forest_vp::ForestVpParams;
    use diffens_core::linalg::Matrix;
    use diffens_core::schedule::{NoiseSchedule, TimeGrid};
    use diffens_core::Stream;

    #[test]
    fn model_bundle_round_trips() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let ds = Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let schedule = NoiseSchedule::default_vp();
        let grid = TimeGrid::uniform(3, 1e-3).unwrap();
        let params = ForestVpParams {
            n_rep: 10,
            forest: diffens_core::forest::ForestConfig {
                n_trees: 2,
                ..Default::default()
            },
        };
        let model = ForestVpModel::train(&ds, &schedule, &grid, &params, Stream::new(1)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);

        // rewriting the same model yields byte-identical files
        let path2 = dir.path().join("model2.json");
        save_model(&path2, &model).unwrap();
        assert_eq!(file_sha256(&path).unwrap(), file_sha256(&path2).unwrap());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, r#"{"format_version": 99, "model": {}}"#).unwrap();
        assert!(load_model(&path).is_err());
    }
}
