//! Margin-softmax engine behind every angular loss.
//!
//! Every loss in the family has the shape
//! `-log( e^f(theta_y) / (e^f(theta_y) + sum_{j != y} e^g(theta_j)) )`
//! with `f(theta) = s * (T(m1 * theta + m2) - m3)` and `g(theta) = s * U(theta)`,
//! where `T`, `U` are cosine or cotangent. The named losses below only pick
//! `T`, `U` and the margins, so corner settings coincide bit for bit.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LossOutput;
use crate::angular::{
    cot_floored, cot_unfloored, cot_via_identity, elastic_sample, AngularBatch, CotPath, LogBase, LossConfig,
};
use crate::error::{input, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Cot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Margins {
    pub const NONE: Margins = Margins { m1: 1.0, m2: 0.0, m3: 0.0 };
}

#[derive(Debug, Clone, Copy)]
struct Head {
    target: Trig,
    other: Trig,
    s: f64,
    eps: f64,
    path: CotPath,
}

impl Head {
    /// `(f, df/dtheta)` for the true class.
    fn target(&self, theta: f64, mg: Margins) -> Result<(f64, f64)> {
        let (t, dt) = match self.target {
            Trig::Cos => {
                let (s, c) = (mg.m1 * theta + mg.m2).sin_cos();
                (c, -s)
            }
            Trig::Cot => {
                let cot = match self.path {
                    CotPath::Theta => cot_unfloored(mg.m1 * theta + mg.m2, self.eps)?,
                    CotPath::Identity => cot_via_identity((mg.m1 * theta).cos(), mg.m2, self.eps)?.1,
                };
                (cot, -(1.0 + cot * cot))
            }
        };
        Ok((self.s * (t - mg.m3), self.s * dt * mg.m1))
    }

    /// `(g, dg/dtheta)` for a non-target class.
    fn other(&self, theta: f64) -> (f64, f64) {
        match self.other {
            Trig::Cos => {
                let (s, c) = theta.sin_cos();
                (self.s * c, -self.s * s)
            }
            Trig::Cot => match self.path {
                CotPath::Theta => {
                    let cot = cot_floored(theta, self.eps);
                    let slope = if theta.tan().abs() < self.eps { 0.0 } else { -(1.0 + cot * cot) };
                    (self.s * cot, self.s * slope)
                }
                CotPath::Identity => {
                    let (sin_t, cos_t) = theta.sin_cos();
                    let raw_sin = (1.0 - cos_t * cos_t).sqrt();
                    let sin_floor = raw_sin.max(self.eps);
                    let cot = cos_t / sin_floor;
                    let slope = if raw_sin < self.eps { -sin_t / self.eps } else { -(1.0 + cot * cot) };
                    (self.s * cot, self.s * slope)
                }
            },
        }
    }
}

/// Natural-log loss of one row and its derivative w.r.t. every logit.
///
/// `logits[y]` is ignored and replaced by `target`.
fn row_softmax(target: f64, logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let z = |j: usize| if j == y { target } else { logits[j] };
    let arg_max = (0..logits.len()).reduce(|a, b| if z(b) > z(a) { b } else { a }).unwrap_or(0);
    let mx = z(arg_max);
    let exps: Vec<f64> = (0..logits.len()).map(|j| (z(j) - mx).exp()).collect();
    // the max term is exactly 1; ln_1p keeps tiny losses accurate
    let rest: f64 = exps.iter().enumerate().filter(|&(j, _)| j != arg_max).map(|(_, e)| e).sum();
    let sum = 1.0 + rest;
    let log_norm = rest.ln_1p();
    let mut probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    probs[y] -= 1.0;
    ((mx - target) + log_norm, probs)
}

struct RowTerms {
    loss: f64,
    grad: Vec<f64>,
}

fn finalize(rows: Vec<RowTerms>, n_classes: usize, base: LogBase) -> LossOutput {
    let n = rows.len();
    let div = base.ln_divisor();
    let mut grad = Array2::zeros((n, n_classes));
    let mut per_sample = Vec::with_capacity(n);
    for (i, row) in rows.into_iter().enumerate() {
        per_sample.push(row.loss / div);
        for (j, g) in row.grad.into_iter().enumerate() {
            grad[[i, j]] = g / (n as f64 * div);
        }
    }
    let value = per_sample.iter().sum::<f64>() / n as f64;
    LossOutput { value, per_sample, grad }
}

/// Weighted sum of margin-softmax branches that share the non-target logits.
///
/// `branches` lists `(weight, target trig)`; the non-target classes always
/// use `other`.
fn evaluate(
    batch: &AngularBatch,
    cfg: &LossConfig,
    other: Trig,
    branches: &[(f64, Trig)],
    margins: &[Margins],
    exec: Execution,
) -> Result<LossOutput> {
    cfg.validate()?;
    let theta = batch.theta();
    let labels = batch.labels();
    let n_classes = batch.n_classes();
    let heads: Vec<(f64, Head)> = branches
        .iter()
        .map(|&(w, target)| (w, Head { target, other, s: cfg.s, eps: cfg.eps, path: cfg.cot_path }))
        .collect();
    let rows = exec.try_map_indexed(batch.len(), |i| -> Result<RowTerms> {
        let y = labels[i];
        let row = theta.row(i);
        let others: Vec<(f64, f64)> = row.iter().map(|&t| heads[0].1.other(t)).collect();
        let logits: Vec<f64> = others.iter().map(|o| o.0).collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; n_classes];
        for (w, head) in &heads {
            if *w == 0.0 {
                continue;
            }
            let (f, df) = head.target(row[y], margins[i])?;
            let (l, dz) = row_softmax(f, &logits, y);
            loss += w * l;
            for j in 0..n_classes {
                let slope = if j == y { df } else { others[j].1 };
                grad[j] += w * dz[j] * slope;
            }
        }
        Ok(RowTerms { loss, grad })
    })?;
    Ok(finalize(rows, n_classes, cfg.log_base))
}

fn fixed(batch: &AngularBatch, mg: Margins) -> Vec<Margins> {
    vec![mg; batch.len()]
}

/// Per-sample elastic margins, drawn in sample order from `cfg.seed`.
pub fn elastic_margins(n: usize, mean: Margins, cfg: &LossConfig) -> Vec<Margins> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..n)
        .map(|_| Margins {
            m1: elastic_sample(mean.m1, cfg.sigma1, &mut rng),
            m2: elastic_sample(mean.m2, cfg.sigma2, &mut rng),
            m3: elastic_sample(mean.m3, cfg.sigma3, &mut rng),
        })
        .collect()
}

fn single_elastic(n: usize, mean: f64, cfg: &LossConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..n).map(|_| elastic_sample(mean, cfg.sigma1, &mut rng)).collect()
}

/// Generic form with fixed margins on the target; exposed for experiments.
pub fn margin_loss(
    batch: &AngularBatch,
    cfg: &LossConfig,
    target: Trig,
    other: Trig,
    margins: &[Margins],
    exec: Execution,
) -> Result<LossOutput> {
    if margins.len() != batch.len() {
        return input(format!("{} margins for {} samples", margins.len(), batch.len()));
    }
    evaluate(batch, cfg, other, &[(1.0, target)], margins, exec)
}

pub fn norm_softmax_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &fixed(batch, Margins::NONE), Execution::default())
}

pub fn sphereface_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg = Margins { m1: cfg.m, m2: 0.0, m3: 0.0 };
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &fixed(batch, mg), Execution::default())
}

pub fn cosface_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg = Margins { m1: 1.0, m2: 0.0, m3: cfg.m };
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &fixed(batch, mg), Execution::default())
}

pub fn arcface_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg = Margins { m1: 1.0, m2: cfg.m, m3: 0.0 };
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &fixed(batch, mg), Execution::default())
}

/// ArcFace with the additive angular margin drawn from `N(m, sigma1^2)` per sample.
pub fn elasticface_arc_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg: Vec<Margins> =
        single_elastic(batch.len(), cfg.m, cfg).into_iter().map(|m| Margins { m1: 1.0, m2: m, m3: 0.0 }).collect();
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &mg, Execution::default())
}

/// CosFace with the cosine margin drawn from `N(m, sigma1^2)` per sample.
pub fn elasticface_cos_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg: Vec<Margins> =
        single_elastic(batch.len(), cfg.m, cfg).into_iter().map(|m| Margins { m1: 1.0, m2: 0.0, m3: m }).collect();
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &mg, Execution::default())
}

/// Large-margin cotangent loss: `f = s*cot(theta + m)`, `g = s*cot(theta)`.
pub fn lmcot_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg = Margins { m1: 1.0, m2: cfg.m, m3: 0.0 };
    margin_loss(batch, cfg, Trig::Cot, Trig::Cot, &fixed(batch, mg), Execution::default())
}

pub fn combined_margin_cos_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg = Margins { m1: cfg.m1, m2: cfg.m2, m3: cfg.m3 };
    margin_loss(batch, cfg, Trig::Cos, Trig::Cos, &fixed(batch, mg), Execution::default())
}

pub fn combined_margin_cot_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg = Margins { m1: cfg.m1, m2: cfg.m2, m3: cfg.m3 };
    margin_loss(batch, cfg, Trig::Cot, Trig::Cot, &fixed(batch, mg), Execution::default())
}

/// LMCot with the additive margin drawn from `N(m, sigma1^2)` per sample.
pub fn elastic_cot_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mg: Vec<Margins> =
        single_elastic(batch.len(), cfg.m, cfg).into_iter().map(|m| Margins { m1: 1.0, m2: m, m3: 0.0 }).collect();
    margin_loss(batch, cfg, Trig::Cot, Trig::Cot, &mg, Execution::default())
}

/// Combined cotangent margins, each drawn independently:
/// `m1 ~ N(cfg.m1, sigma1^2)`, `m2 ~ N(cfg.m2, sigma2^2)`, `m3 ~ N(cfg.m3, sigma3^2)`.
pub fn generalized_lmcot_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    generalized_lmcot_loss_with(batch, cfg, Execution::default())
}

pub fn generalized_lmcot_loss_with(batch: &AngularBatch, cfg: &LossConfig, exec: Execution) -> Result<LossOutput> {
    let mean = Margins { m1: cfg.m1, m2: cfg.m2, m3: cfg.m3 };
    let mg = elastic_margins(batch.len(), mean, cfg);
    margin_loss(batch, cfg, Trig::Cot, Trig::Cot, &mg, exec)
}

/// `alpha * L_cot + beta * L_cos`.
///
/// Both branches share the same elastic draws and the same cotangent-based
/// non-target sum `I = sum_{j != y} e^{s cot theta_j}`, so the cosine branch
/// differs from the cosine losses above in its denominator.
pub fn dual_cot_cos_loss(batch: &AngularBatch, cfg: &LossConfig) -> Result<LossOutput> {
    dual_cot_cos_loss_with(batch, cfg, Execution::default())
}

pub fn dual_cot_cos_loss_with(batch: &AngularBatch, cfg: &LossConfig, exec: Execution) -> Result<LossOutput> {
    if cfg.alpha + cfg.beta <= 0.0 {
        return Err(crate::Error::Config("alpha + beta must be > 0".into()));
    }
    let mean = Margins { m1: cfg.m1, m2: cfg.m2, m3: cfg.m3 };
    let mg = elastic_margins(batch.len(), mean, cfg);
    evaluate(batch, cfg, Trig::Cot, &[(cfg.alpha, Trig::Cot), (cfg.beta, Trig::Cos)], &mg, exec)
}

/// Plain softmax cross-entropy on raw logits; the gradient is w.r.t. the logits.
pub fn softmax_loss(logits: &Array2<f64>, labels: &[usize], log_base: LogBase) -> Result<LossOutput> {
    let (n, k) = logits.dim();
    if n == 0 || k == 0 {
        return input("softmax loss needs a non-empty logit matrix");
    }
    if labels.len() != n {
        return input(format!("{} labels for {} rows", labels.len(), n));
    }
    if labels.iter().any(|&y| y >= k) {
        return input("label out of range");
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return input("non-finite logit");
    }
    let rows = Execution::default().map_indexed(n, |i| {
        let row: Vec<f64> = logits.row(i).to_vec();
        let y = labels[i];
        let (loss, grad) = row_softmax(row[y], &row, y);
        RowTerms { loss, grad }
    });
    Ok(finalize(rows, k, log_base))
}
