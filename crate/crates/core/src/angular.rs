//! Normalization, angles and the cotangent kernels shared by every angular loss.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{input, Error, Result};

pub const DEFAULT_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    /// Divisor that converts a natural log into this base.
    pub fn ln_divisor(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Ten => std::f64::consts::LN_10,
        }
    }
}

/// Which evaluation route the cotangent kernel takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CotPath {
    /// Through the angle: `1 / tan(theta)`.
    #[default]
    Theta,
    /// Straight from the cosine using `sin = sqrt(1 - cos^2)` and angle addition.
    Identity,
}

/// Every hyperparameter of the angular loss family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub s: f64,
    pub m: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub log_base: LogBase,
    pub cot_path: CotPath,
    /// Seed for the elastic margin draws.
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            s: 16.0,
            m: 0.05,
            m1: 1.0,
            m2: 0.0,
            m3: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            sigma3: 0.0,
            alpha: 1.0,
            beta: 0.0,
            eps: DEFAULT_EPS,
            log_base: LogBase::Natural,
            cot_path: CotPath::Theta,
            seed: 0,
        }
    }
}

impl LossConfig {
    /// The hand-worked two-sample setting: s = 2, base-10 logarithm.
    pub fn worked_example(m: f64) -> Self {
        Self { s: 2.0, m, log_base: LogBase::Ten, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.s,
            self.m,
            self.m1,
            self.m2,
            self.m3,
            self.sigma1,
            self.sigma2,
            self.sigma3,
            self.alpha,
            self.beta,
            self.eps,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("all hyperparameters must be finite".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.s < 0.0 {
            return Err(Error::Config(format!("scale s must be >= 0, got {}", self.s)));
        }
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 || self.sigma3 < 0.0 {
            return Err(Error::Config("sigma values must be >= 0".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Angles between every sample and every class weight, with the true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularBatch {
    theta: Array2<f64>,
    labels: Vec<usize>,
}

impl AngularBatch {
    pub fn new(theta: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n_samples, n_classes) = theta.dim();
        if n_samples == 0 || n_classes == 0 {
            return input("angular batch must have at least one sample and one class");
        }
        if labels.len() != n_samples {
            return input(format!("{} labels for {} samples", labels.len(), n_samples));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return input(format!("label {bad} out of range for {n_classes} classes"));
        }
        if let Some(&bad) = theta.iter().find(|&&t| !t.is_finite() || !(0.0..std::f64::consts::PI).contains(&t)) {
            return input(format!("angle {bad} outside [0, pi)"));
        }
        Ok(Self { theta, labels })
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.theta.ncols()
    }

    /// Same batch with its angles replaced; used by finite-difference checks.
    pub fn with_theta(&self, theta: Array2<f64>) -> Result<Self> {
        Self::new(theta, self.labels.clone())
    }
}

pub fn l2_normalize(v: ArrayView1<f64>, eps: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return input("cannot normalize an empty vector");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return input("non-finite vector component");
    }
    let norm = v.dot(&v).sqrt();
    if norm < eps {
        return Err(Error::ZeroVector { norm, eps });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub(crate) fn normalize_rows(m: ArrayView2<f64>, eps: f64) -> Result<Array2<f64>> {
    let mut out = m.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let unit = l2_normalize(row.view(), eps)?;
        row.iter_mut().zip(unit).for_each(|(r, u)| *r = u);
    }
    Ok(out)
}

/// `theta[i][j] = arccos(clamp(x_i . w_j, -1 + eps, 1 - eps))` on l2-normalized rows.
pub fn angles_from_features(features: ArrayView2<f64>, weights: ArrayView2<f64>, eps: f64) -> Result<Array2<f64>> {
    if features.ncols() != weights.ncols() {
        return input(format!("feature dim {} does not match weight dim {}", features.ncols(), weights.ncols()));
    }
    let x = normalize_rows(features, eps)?;
    let w = normalize_rows(weights, eps)?;
    Ok(x.dot(&w.t()).mapv(|c| clamp_cos(c, eps).acos()))
}

pub(crate) fn clamp_cos(c: f64, eps: f64) -> f64 {
    c.clamp(-1.0 + eps, 1.0 - eps)
}

/// Cotangent of `theta` and of `theta + m` through `tan`.
///
/// `tan(theta)` has its magnitude floored at `eps` (sign kept); `tan(theta + m)`
/// is used as is and a zero of `sin(theta + m)` is reported as a singularity.
pub fn cot_via_theta(theta: f64, m: f64, eps: f64) -> Result<(f64, f64)> {
    Ok((cot_floored(theta, eps), cot_unfloored(theta + m, eps)?))
}

pub(crate) fn cot_floored(theta: f64, eps: f64) -> f64 {
    let t = theta.tan();
    let floored = if t.abs() < eps { eps.copysign(t) } else { t };
    1.0 / floored
}

pub(crate) fn cot_unfloored(angle: f64, eps: f64) -> Result<f64> {
    if angle.sin().abs() < eps {
        return Err(Error::Singularity { angle, eps });
    }
    Ok(1.0 / angle.tan())
}

/// Cotangent of `theta` and `theta + m` without evaluating the angle.
pub fn cot_via_identity(cos_theta: f64, m: f64, eps: f64) -> Result<(f64, f64)> {
    if !cos_theta.is_finite() || cos_theta.abs() > 1.0 + 1e-12 {
        return input(format!("cosine {cos_theta} outside [-1, 1]"));
    }
    let c = cos_theta.clamp(-1.0, 1.0);
    let sin_theta = (1.0 - c * c).sqrt().max(eps);
    let cot_theta = c / sin_theta;
    let (sm, cm) = m.sin_cos();
    let cos_theta_m = c * cm - sin_theta * sm;
    let sin_theta_m = sin_theta * cm + c * sm;
    if sin_theta_m.abs() < eps {
        return Err(Error::Singularity { angle: c.acos() + m, eps });
    }
    Ok((cot_theta, cos_theta_m / sin_theta_m))
}

/// One Gaussian draw with the given mean and standard deviation.
pub fn elastic_sample<R: Rng + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    // sigma is validated non-negative and finite by LossConfig
    Normal::new(mean, sigma).expect("finite non-negative sigma").sample(rng)
}
