//! Score-level losses for the binary (live/spoof, eye-state) heads.

use crate::error::{input, Result};

/// Classifier outputs split by ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    pub low_scores: Vec<f64>,
    pub high_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleLossOutput {
    pub value: f64,
    pub grad_low: Vec<f64>,
    pub grad_high: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLossOutput {
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// dL/dscore for each raw (pre-margin) score.
    pub grad: Vec<f64>,
}

/// `mean(low) - mean(high) + 1`.
///
/// Label-0 scores are pushed down and label-1 scores up; which side is which
/// must come from another term, the loss itself only separates them.
pub fn double_loss(pair: &ScorePair) -> Result<DoubleLossOutput> {
    if pair.low_scores.is_empty() || pair.high_scores.is_empty() {
        return input("double loss needs both a label-0 and a label-1 branch");
    }
    if pair.low_scores.iter().chain(&pair.high_scores).any(|s| !s.is_finite()) {
        return input("non-finite score");
    }
    let nl = pair.low_scores.len() as f64;
    let nh = pair.high_scores.len() as f64;
    let low = pair.low_scores.iter().sum::<f64>() / nl;
    let high = pair.high_scores.iter().sum::<f64>() / nh;
    Ok(DoubleLossOutput {
        value: low - high + 1.0,
        grad_low: vec![1.0 / nl; pair.low_scores.len()],
        grad_high: vec![-1.0 / nh; pair.high_scores.len()],
    })
}

pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy after shifting each score by `(label - 0.5) * m`.
///
/// With `m > 0` the shift moves a score towards its own label, which eases
/// the true class. Pass a negative `m` for the variant that penalizes it.
pub fn margin_sigmoid_ce(scores: &[f64], labels: &[u8], m: f64) -> Result<ScoreLossOutput> {
    if scores.is_empty() {
        return input("no scores");
    }
    if scores.len() != labels.len() {
        return input(format!("{} scores for {} labels", scores.len(), labels.len()));
    }
    if labels.iter().any(|&l| l > 1) {
        return input("labels must be 0 or 1");
    }
    if scores.iter().any(|s| !s.is_finite()) || !m.is_finite() {
        return input("non-finite score or margin");
    }
    let n = scores.len() as f64;
    let mut per_sample = Vec::with_capacity(scores.len());
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &l) in scores.iter().zip(labels) {
        let y = f64::from(l);
        let z = s + (y - 0.5) * m;
        // -[y log sigmoid(z) + (1-y) log(1 - sigmoid(z))] = softplus(z) - y z
        per_sample.push(softplus(z) - y * z);
        grad.push((sigmoid(z) - y) / n);
    }
    let value = per_sample.iter().sum::<f64>() / n;
    Ok(ScoreLossOutput { value, per_sample, grad })
}
