use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ForestModel, LinearModel, Scorer, FEATURE_NAMES};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Logreg(LinearModel),
    Forest(ForestModel),
}

impl Scorer for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Logreg(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
        }
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Logreg(m) => m.score_row(row),
            Model::Forest(m) => m.score_row(row),
        }
    }
}

/// Versioned JSON envelope; `features` pins the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    pub features: Vec<String>,
    pub model: Model,
}

impl SavedModel {
    pub fn new(model: Model) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            model,
        }
    }
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let m: SavedModel = serde_json::from_slice(&std::fs::read(path)?)?;
    if m.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {}",
            m.version
        )));
    }
    if m.features.len() != m.model.n_features() {
        return Err(Error::Corrupt(format!(
            "model lists {} features but expects {}",
            m.features.len(),
            m.model.n_features()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::Tree;

    #[test]
    fn json_roundtrip() {
        let forest = ForestModel {
            trees: vec![Tree::leaf(0.25)],
            tree_count: 1,
            max_depth: Some(4),
            rng_seed: 3,
            n_features: 7,
        };
        let dir = tempfile::tempdir().unwrap();
        for model in [Model::Logreg(LinearModel::zeros(7)), Model::Forest(forest)] {
            let saved = SavedModel::new(model);
            let path = dir.path().join("m.json");
            save_model(&saved, &path).unwrap();
            assert_eq!(load_model(&path).unwrap(), saved);
        }
        let text =
            serde_json::to_string(&SavedModel::new(Model::Logreg(LinearModel::zeros(7)))).unwrap();
        assert!(text.contains("\"kind\":\"logreg\""));
        assert!(text.contains(
            "\"features\":[\"mean\",\"max\",\"min\",\"variance\",\"skew\",\"kurtosis\",\"area\"]"
        ));
    }
}
