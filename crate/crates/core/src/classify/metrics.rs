use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("NaN score"));
    }
    Ok(())
}

/// Mann-Whitney estimate of P(score of a positive > score of a negative),
/// ties counted one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC AUC needs both positive and negative labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise average precision over descending scores; equal scores keep
/// index order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
            ap += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

/// Fraction of rows where `score >= 0.5` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, &l)| (**s >= 0.5) == l)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Computes `metric` per session and returns the unweighted mean. Sessions
/// on which the metric is undefined (e.g. a single class) are skipped;
/// errors only if every session is.
pub fn session_mean(
    metric: impl Fn(&[f64], &[bool]) -> Result<f64>,
    scores: &[f64],
    labels: &[bool],
    sessions: &[String],
) -> Result<f64> {
    check_lengths(scores, labels)?;
    if sessions.len() != scores.len() {
        return Err(Error::arg("session ids do not match scores"));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((s, &l), id) in scores.iter().zip(labels).zip(sessions) {
        let g = groups.entry(id.as_str()).or_default();
        g.0.push(*s);
        g.1.push(l);
    }
    let values: Vec<f64> = groups
        .values()
        .filter_map(|(s, l)| metric(s, l).ok())
        .collect();
    if values.is_empty() {
        return Err(Error::UndefinedMetric(
            "metric undefined in every session".into(),
        ));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
