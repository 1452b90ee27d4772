//! Verification metrics over genuine/impostor similarity scores.
//!
//! Scores are similarities: higher means "same identity". Cosine distance,
//! used for the histograms, is `1 - similarity`.

use std::fmt::Write as _;

use crate::error::{input, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredPairs {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoredPairs {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        Self { genuine, impostor }
    }

    fn check(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return input("need at least one genuine and one impostor score");
        }
        if self.genuine.iter().chain(&self.impostor).any(|s| !s.is_finite()) {
            return input("non-finite score");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// FAR and FRR at `t` from pre-sorted score lists.
fn rates_at(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let accepted_impostors = impostor.len() - impostor.partition_point(|&s| s < t);
    let rejected_genuine = genuine.partition_point(|&s| s < t);
    (accepted_impostors as f64 / impostor.len() as f64, rejected_genuine as f64 / genuine.len() as f64)
}

/// FAR = share of impostors with score >= t, FRR = share of genuine with score < t.
pub fn far_frr_sweep(pairs: &ScoredPairs, thresholds: &[f64]) -> Result<Vec<RatePoint>> {
    pairs.check()?;
    let g = sorted(&pairs.genuine);
    let i = sorted(&pairs.impostor);
    Ok(thresholds
        .iter()
        .map(|&t| {
            let (far, frr) = rates_at(&g, &i, t);
            RatePoint { threshold: t, far, frr }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate by linear interpolation of the FAR/FRR crossing.
///
/// Candidate thresholds are the distinct scores plus one value above all of
/// them. `FAR - FRR` is non-increasing over the candidates, starts positive and
/// ends at -1; the EER is read off the segment where it first reaches zero.
/// When it stays exactly zero over several candidates the threshold is the
/// midpoint of that plateau.
pub fn eer(pairs: &ScoredPairs) -> Result<Eer> {
    pairs.check()?;
    let g = sorted(&pairs.genuine);
    let i = sorted(&pairs.impostor);
    let mut cands: Vec<f64> = g.iter().chain(&i).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let top = *cands.last().expect("non-empty");
    cands.push(top + top.abs().max(1.0));

    let pts: Vec<(f64, f64, f64)> = cands
        .iter()
        .map(|&t| {
            let (far, frr) = rates_at(&g, &i, t);
            (t, far, frr)
        })
        .collect();
    let d = |k: usize| pts[k].1 - pts[k].2;
    let k = (0..pts.len()).find(|&k| d(k) <= 0.0).expect("last candidate has FAR - FRR = -1");
    if d(k) == 0.0 {
        let last = (k..pts.len()).take_while(|&j| d(j) == 0.0).last().unwrap_or(k);
        return Ok(Eer { eer: pts[k].1, threshold: 0.5 * (pts[k].0 + pts[last].0) });
    }
    // d(0) = 1 - FRR(min) > 0, so k >= 1 here
    let (t0, far0, frr0) = pts[k - 1];
    let (t1, far1, frr1) = pts[k];
    let lambda = d(k - 1) / (d(k - 1) - d(k));
    let far = far0 + lambda * (far1 - far0);
    let frr = frr0 + lambda * (frr1 - frr0);
    Ok(Eer { eer: 0.5 * (far + frr), threshold: t0 + lambda * (t1 - t0) })
}

/// `P(genuine > impostor) + 0.5 P(tie)` via the rank-sum statistic.
pub fn auc(pairs: &ScoredPairs) -> Result<f64> {
    pairs.check()?;
    let ng = pairs.genuine.len();
    let ni = pairs.impostor.len();
    let mut all: Vec<(f64, bool)> =
        pairs.genuine.iter().map(|&s| (s, true)).chain(pairs.impostor.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start;
        while end + 1 < all.len() && all[end + 1].0 == all[start].0 {
            end += 1;
        }
        // average of 1-based ranks start+1 ..= end+1
        let avg = (start + end + 2) as f64 / 2.0;
        rank_sum += avg * all[start..=end].iter().filter(|p| p.1).count() as f64;
        start = end + 1;
    }
    let u = rank_sum - (ng * (ng + 1)) as f64 / 2.0;
    Ok(u / (ng as f64 * ni as f64))
}

/// Counts over `bins` equal-width bins of `[lo, hi]`; values outside are skipped.
pub fn histogram(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<usize>> {
    if bins == 0 {
        return input("histogram needs at least one bin");
    }
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return input(format!("invalid histogram range [{lo}, {hi}]"));
    }
    let mut counts = vec![0; bins];
    for &x in scores {
        if !(lo..=hi).contains(&x) {
            continue;
        }
        let idx = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    Ok(counts)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return input(format!("dimension mismatch {} vs {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// `1 - a.b` for unit vectors, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok((1.0 - cosine_similarity(a, b)?).clamp(0.0, 2.0))
}

pub fn histogram_csv(counts: &[usize], lo: f64, hi: f64) -> String {
    let width = (hi - lo) / counts.len() as f64;
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (k, c) in counts.iter().enumerate() {
        let a = lo + k as f64 * width;
        let _ = writeln!(out, "{},{},{}", a, a + width, c);
    }
    out
}

pub fn sweep_csv(points: &[RatePoint]) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.frr);
    }
    out
}
