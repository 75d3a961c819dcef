//! Model families: functional decoder, convolutional and linear
//! autoencoders, classical PCA, plus the self-describing model file.

mod autoencoder;
mod functional;
mod normalize;
mod pca;

pub use autoencoder::{
    merge_sub_params, sub_network, AutoencoderModel, AutoencoderSpec, ConvAutoencoderSpec,
    LinearProjectionSpec,
};
pub use functional::{DecodeGradients, FunctionalDecoderSpec, FunctionalModel};
pub use normalize::AffineMap;
pub use pca::{pca_fit, PcaModel};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Versioned, self-describing model file: spec, weights and normalization
/// travel together so completion never depends on training-time code.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub model: Model,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Functional(FunctionalModel),
    Autoencoder(AutoencoderModel),
    Pca(PcaModel),
}

impl Model {
    pub fn factors(&self) -> usize {
        match self {
            Model::Functional(m) => m.spec.factors,
            Model::Autoencoder(m) => m.factors(),
            Model::Pca(m) => m.factors(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile { version: MODEL_FILE_VERSION, model: self.clone() };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| CoreError::Serialize(e.to_string()))?;
        // Atomic write: temp file in the same directory, then rename.
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        ));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| CoreError::Serialize(e.to_string()))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(CoreError::Serialize(format!(
                "unsupported model file version {}",
                file.version
            )));
        }
        Ok(file.model)
    }
}
