use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{accuracy, average_precision, check_xy, predict_scores, roc_auc, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RocAuc,
    AveragePrecision,
    Accuracy,
}

impl Metric {
    pub fn eval(self, scores: &[f64], labels: &[bool]) -> Result<f64> {
        match self {
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::AveragePrecision => average_precision(scores, labels),
            Metric::Accuracy => accuracy(scores, labels),
        }
    }
}

/// Drop in `metric` when one feature column is shuffled, averaged over
/// `repeats` shuffles.
///
/// Repeat `r` applies the same row permutation to whichever column is being
/// probed (ChaCha stream `r` of `seed`), so importances do not depend on the
/// column order.
pub fn permutation_importance<S: Scorer + ?Sized>(
    model: &S,
    x: &[Vec<f64>],
    y: &[bool],
    metric: Metric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = check_xy(x, y)?;
    let baseline = metric.eval(&predict_scores(model, x)?, y)?;
    let perms: Vec<Vec<usize>> = (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut p: Vec<usize> = (0..x.len()).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let mut out = Vec::with_capacity(d);
    let mut probe: Vec<Vec<f64>> = x.to_vec();
    for f in 0..d {
        let mut drop = 0.0;
        for perm in &perms {
            for (row, &src) in probe.iter_mut().zip(perm) {
                row[f] = x[src][f];
            }
            drop += baseline - metric.eval(&predict_scores(model, &probe)?, y)?;
        }
        for (row, orig) in probe.iter_mut().zip(x) {
            row[f] = orig[f];
        }
        out.push(if repeats == 0 {
            0.0
        } else {
            drop / repeats as f64
        });
    }
    Ok(out)
}
