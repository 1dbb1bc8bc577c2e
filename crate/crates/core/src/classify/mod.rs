//! Square ranking from crop summary statistics.
//!
//! Both models consume the same seven features (see [`FEATURE_NAMES`]) and
//! emit a probability that the operator would select the square. The ranking
//! metrics here are shared by every classifier in the project, including the
//! externally trained CNN scores read back from CSV.

mod features;
mod forest;
mod importance;
mod logreg;
mod metrics;
mod model;

pub use features::{extract_features, moment_features, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use forest::{train_forest, ForestModel, ForestParams, Node, Tree};
pub use importance::{permutation_importance, Metric};
pub use logreg::{logreg_objective, train_logreg, train_logreg_traced, LinearModel, LogRegParams};
pub use metrics::{accuracy, average_precision, roc_auc, session_mean};
pub use model::{load_model, save_model, Model, SavedModel, MODEL_FORMAT_VERSION};

use crate::error::{Error, Result};

/// Anything that maps a feature row to a probability.
pub trait Scorer {
    fn n_features(&self) -> usize;
    /// Score of a single row; callers guarantee the dimension.
    fn score_row(&self, row: &[f64]) -> f64;
}

/// Scores every row, checking dimensionality first.
pub fn predict_scores<S: Scorer + ?Sized>(model: &S, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = model.n_features();
    if let Some((i, row)) = x.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::arg(format!(
            "row {i} has {} features, model expects {d}",
            row.len()
        )));
    }
    Ok(x.iter().map(|r| model.score_row(r)).collect())
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x.first().map(Vec::len).unwrap_or(0);
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::arg("feature rows have differing lengths"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite feature value"));
    }
    Ok(d)
}
