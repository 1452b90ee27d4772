//! Central finite-difference checks of every analytic gradient.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::MlpModel;
use crate::angular::{AngularBatch, LogBase, LossConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::losses::{double_loss, margin_sigmoid_ce, softmax_loss, AngularLoss, ScorePair};

/// Floor of the relative-error denominator, per unit of `max(1, |f(x)|)`.
///
/// Central differences carry round-off of order `ulp(f) / h`, so entries far
/// below the loss magnitude are compared in absolute terms instead.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Default step for the central differences.
pub const DEFAULT_H: f64 = 1e-5;

/// A function with an analytic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    Angular(AngularLoss),
    Softmax,
    Double,
    MarginCe,
}

impl GradTarget {
    pub fn all() -> Vec<GradTarget> {
        AngularLoss::ALL
            .into_iter()
            .map(GradTarget::Angular)
            .chain([GradTarget::Softmax, GradTarget::Double, GradTarget::MarginCe])
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            GradTarget::Angular(l) => l.name(),
            GradTarget::Softmax => "softmax",
            GradTarget::Double => "double",
            GradTarget::MarginCe => "margin-ce",
        }
    }
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(GradTarget::Softmax),
            "double" => Ok(GradTarget::Double),
            "margin-ce" => Ok(GradTarget::MarginCe),
            other => other.parse().map(GradTarget::Angular),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub target: GradTarget,
    pub trials: usize,
    pub h: f64,
    pub max_rel_err: f64,
    pub worst_trial: usize,
    /// Human-readable description of the worst configuration.
    pub worst_config: String,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// `|a - n| / max(|a|, |n|, floor)` with `floor = REL_ERR_FLOOR * max(1, |f|)`.
pub fn rel_err(analytic: f64, numeric: f64, value: f64) -> f64 {
    let floor = REL_ERR_FLOOR * value.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error between an analytic gradient and central differences
/// of `f` around `x`. A step that leaves the domain of `f` counts as an
/// infinite error; only a failure at `x` itself is returned as `Err`.
pub fn compare<F>(x: &[f64], analytic: &[f64], h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let value = f(x)?;
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let down = f(&probe);
        probe[k] = x[k];
        let err = match (up, down) {
            (Ok(u), Ok(d)) => rel_err(analytic[k], (u - d) / (2.0 * h), value),
            _ => f64::INFINITY,
        };
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    Ok(worst)
}

/// Random hyperparameters in the ranges the checks sample from.
fn random_config(rng: &mut ChaCha8Rng) -> LossConfig {
    let alpha = rng.random_range(0.0..1.0);
    LossConfig {
        s: rng.random_range(1.0..8.0),
        m: rng.random_range(0.0..0.5),
        m1: rng.random_range(0.8..1.2),
        m2: rng.random_range(0.0..0.3),
        m3: rng.random_range(0.0..0.3),
        sigma1: rng.random_range(0.0..0.03),
        sigma2: rng.random_range(0.0..0.03),
        sigma3: rng.random_range(0.0..0.03),
        alpha,
        beta: 1.0 - alpha + 0.05,
        log_base: if rng.random_bool(0.5) { LogBase::Natural } else { LogBase::Ten },
        seed: rng.random(),
        ..LossConfig::default()
    }
}

/// Angles in `[0.2, 2.2]`: the widest margins sampled above keep every
/// shifted target angle inside `(0.15, pi - 0.15)`.
fn random_angles(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>) {
    let n = rng.random_range(1..=4);
    let c = rng.random_range(2..=5);
    let theta = Array2::from_shape_simple_fn((n, c), || rng.random_range(0.2..2.2));
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    (theta, labels)
}

fn angular_trial(loss: AngularLoss, rng: &mut ChaCha8Rng, h: f64) -> Result<(f64, String)> {
    let cfg = random_config(rng);
    let (theta, labels) = random_angles(rng);
    let batch = AngularBatch::new(theta.clone(), labels.clone())?;
    let out = loss.evaluate(&batch, &cfg)?;
    let shape = theta.dim();
    let x: Vec<f64> = theta.iter().copied().collect();
    let g: Vec<f64> = out.grad.iter().copied().collect();
    let err = compare(&x, &g, h, |p| {
        let t = Array2::from_shape_vec(shape, p.to_vec()).expect("same shape");
        Ok(loss.evaluate(&AngularBatch::new(t, labels.clone())?, &cfg)?.value)
    })?;
    let desc = format!(
        "N={} n={} s={:.3} m={:.3} m1={:.3} m2={:.3} m3={:.3} alpha={:.3} beta={:.3} base={:?}",
        shape.0, shape.1, cfg.s, cfg.m, cfg.m1, cfg.m2, cfg.m3, cfg.alpha, cfg.beta, cfg.log_base
    );
    Ok((err, desc))
}

fn softmax_trial(rng: &mut ChaCha8Rng, h: f64) -> Result<(f64, String)> {
    let (n, c) = (rng.random_range(1..=4), rng.random_range(2..=5));
    let logits = Array2::from_shape_simple_fn((n, c), || rng.random_range(-5.0..5.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let out = softmax_loss(&logits, &labels, LogBase::Natural)?;
    let x: Vec<f64> = logits.iter().copied().collect();
    let g: Vec<f64> = out.grad.iter().copied().collect();
    let err = compare(&x, &g, h, |p| {
        let l = Array2::from_shape_vec((n, c), p.to_vec()).expect("same shape");
        Ok(softmax_loss(&l, &labels, LogBase::Natural)?.value)
    })?;
    Ok((err, format!("N={n} n={c}")))
}

fn double_trial(rng: &mut ChaCha8Rng, h: f64) -> Result<(f64, String)> {
    let (nl, nh) = (rng.random_range(1..=6), rng.random_range(1..=6));
    let x: Vec<f64> = (0..nl + nh).map(|_| rng.random_range(0.0..1.0)).collect();
    let split = |p: &[f64]| ScorePair { low_scores: p[..nl].to_vec(), high_scores: p[nl..].to_vec() };
    let out = double_loss(&split(&x))?;
    let g: Vec<f64> = out.grad_low.iter().chain(&out.grad_high).copied().collect();
    let err = compare(&x, &g, h, |p| Ok(double_loss(&split(p))?.value))?;
    Ok((err, format!("low={nl} high={nh}")))
}

fn margin_ce_trial(rng: &mut ChaCha8Rng, h: f64) -> Result<(f64, String)> {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(-2.0..2.0);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
    let out = margin_sigmoid_ce(&x, &labels, m)?;
    let err = compare(&x, &out.grad, h, |p| Ok(margin_sigmoid_ce(p, &labels, m)?.value))?;
    Ok((err, format!("N={n} m={m:.3}")))
}

/// Compare analytic and central-difference gradients on `trials` random
/// non-singular configurations; trial `k` is seeded with `seed + k`.
pub fn gradcheck(target: GradTarget, trials: usize, h: f64, seed: u64, exec: Execution) -> Result<GradcheckReport> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step h must be positive, got {h}")));
    }
    let results = exec.try_map_indexed(trials, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        match target {
            GradTarget::Angular(loss) => angular_trial(loss, &mut rng, h),
            GradTarget::Softmax => softmax_trial(&mut rng, h),
            GradTarget::Double => double_trial(&mut rng, h),
            GradTarget::MarginCe => margin_ce_trial(&mut rng, h),
        }
    })?;
    let (worst_trial, (max_rel_err, worst_config)) = results
        .into_iter()
        .enumerate()
        .fold((0, (-1.0, String::new())), |best, (k, r)| if r.0 > best.1 .0 { (k, r) } else { best });
    Ok(GradcheckReport { target, trials, h, max_rel_err, worst_trial, worst_config })
}

/// Central differences through the whole network: every weight, bias and
/// head entry of `model` for `loss` on `(x, labels)`.
pub fn model_gradcheck(
    model: &MlpModel,
    x: &Array2<f64>,
    labels: &[usize],
    loss: AngularLoss,
    cfg: &LossConfig,
    h: f64,
) -> Result<f64> {
    let value = |m: &MlpModel| -> Result<f64> {
        let fwd = m.forward(x.view(), cfg.eps)?;
        loss.evaluate(&AngularBatch::new(fwd.theta, labels.to_vec())?, cfg).map(|o| o.value)
    };
    let fwd = model.forward(x.view(), cfg.eps)?;
    let out = loss.evaluate(&AngularBatch::new(fwd.theta.clone(), labels.to_vec())?, cfg)?;
    let analytic = model.backward(&fwd, &out.grad)?.flatten();
    let params: Vec<f64> = model.clone().params_mut().map(|p| *p).collect();
    let mut probe = model.clone();
    compare(&params, &analytic, h, |p| {
        probe.params_mut().zip(p).for_each(|(dst, &src)| *dst = src);
        value(&probe)
    })
}
