//! SGD training on synthetic data and the line-oriented report.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Gradients, MlpModel};
use super::synth::{synth_split, Dataset, SynthConfig, Task};
use crate::angular::{AngularBatch, LossConfig};
use crate::error::{Error, Result};
use crate::losses::{double_loss, margin_sigmoid_ce, sigmoid, AngularLoss, ScorePair};
use crate::metrics::{auc, cosine_similarity, eer, ScoredPairs};

/// What a run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// An angular loss on the class head of an embedding network.
    Angular(AngularLoss),
    /// Margin sigmoid cross-entropy on a single-score network.
    MarginCe,
    /// Margin sigmoid cross-entropy plus the double loss, summed.
    MarginCeDouble,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Angular(l) => l.name(),
            Objective::MarginCe => "margin-ce",
            Objective::MarginCeDouble => "double+margin-ce",
        }
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, Objective::Angular(_))
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "margin-ce" => Ok(Objective::MarginCe),
            "double+margin-ce" => Ok(Objective::MarginCeDouble),
            other => other.parse().map(Objective::Angular),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub data: SynthConfig,
    pub objective: Objective,
    pub loss: LossConfig,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Margin for the sigmoid cross-entropy of the binary objectives.
    pub score_margin: f64,
    /// Seeds the initial weights and the batch draws.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig::default(),
            objective: Objective::Angular(AngularLoss::LmCot),
            loss: LossConfig::default(),
            steps: 500,
            lr: 0.05,
            batch_size: 64,
            hidden: vec![64, 64],
            embed_dim: 32,
            score_margin: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.loss.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if !self.score_margin.is_finite() {
            return Err(Error::Config("score margin must be finite".into()));
        }
        if self.objective.is_binary() != self.data.task.is_binary() {
            return Err(Error::Config(format!("objective {} does not fit task {}", self.objective, self.data.task)));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed dim must be positive".into()));
        }
        Ok(())
    }

    fn echo(&self) -> Vec<(&'static str, String)> {
        let l = &self.loss;
        vec![
            ("objective", self.objective.to_string()),
            ("task", self.data.task.to_string()),
            ("classes", self.data.n_classes.to_string()),
            ("dim", self.data.dim.to_string()),
            ("per_class", self.data.per_class.to_string()),
            ("spread", self.data.intra_spread.to_string()),
            ("data_seed", self.data.seed.to_string()),
            ("steps", self.steps.to_string()),
            ("lr", self.lr.to_string()),
            ("batch", self.batch_size.to_string()),
            ("hidden", self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("x")),
            ("embed_dim", self.embed_dim.to_string()),
            ("s", l.s.to_string()),
            ("m", l.m.to_string()),
            ("m1", l.m1.to_string()),
            ("m2", l.m2.to_string()),
            ("m3", l.m3.to_string()),
            ("sigma", format!("{}/{}/{}", l.sigma1, l.sigma2, l.sigma3)),
            ("alpha", l.alpha.to_string()),
            ("beta", l.beta.to_string()),
            ("score_margin", self.score_margin.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Equal error rate over all held-out pairs, cosine similarity.
    Eer,
    /// AUC of the raw held-out scores, label 1 as positive.
    Auc,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Eer => "eer",
            MetricKind::Auc => "auc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Minibatch loss before each update.
    pub loss_curve: Vec<f64>,
    /// Milliseconds since the start of the run at the end of each step.
    pub step_ms: Vec<f64>,
    pub metric: MetricKind,
    /// Held-out metric before the first and after the last update.
    pub initial_metric: f64,
    pub final_metric: f64,
    pub config: Vec<(&'static str, String)>,
}

impl TrainReport {
    /// Text records: one `config` line, one `step` line per step, one
    /// `final` line. Timing is optional since it varies between runs.
    pub fn to_text(&self, with_timing: bool) -> String {
        let mut out = String::from("# train report v1\nconfig");
        for (k, v) in &self.config {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        for (i, loss) in self.loss_curve.iter().enumerate() {
            let _ = write!(out, "step index={i} loss={loss}");
            if with_timing {
                let _ = write!(out, " wall_ms={:.3}", self.step_ms[i]);
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "final metric={} initial={} final={}",
            self.metric.name(),
            self.initial_metric,
            self.final_metric
        );
        out
    }

    /// `step,wall_ms` table.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("step,wall_ms\n");
        for (i, ms) in self.step_ms.iter().enumerate() {
            let _ = writeln!(out, "{i},{ms:.3}");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model: MlpModel,
}

/// EER of cosine similarity over every pair of held-out embeddings.
pub fn embedding_eer(model: &MlpModel, data: &Dataset, eps: f64) -> Result<f64> {
    let e = model.embed(data.features.view(), eps)?;
    let rows: Vec<Vec<f64>> = e.outer_iter().map(|r| r.to_vec()).collect();
    let mut pairs = ScoredPairs::default();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s = cosine_similarity(&rows[i], &rows[j])?;
            if data.labels[i] == data.labels[j] {
                pairs.genuine.push(s);
            } else {
                pairs.impostor.push(s);
            }
        }
    }
    Ok(eer(&pairs)?.eer)
}

/// AUC of a score model with label 1 as the positive class.
pub fn score_auc(model: &MlpModel, data: &Dataset) -> Result<f64> {
    let scores = model.scores(data.features.view())?;
    let mut pairs = ScoredPairs::default();
    for (s, &l) in scores.into_iter().zip(&data.labels) {
        if l == 1 {
            pairs.genuine.push(s);
        } else {
            pairs.impostor.push(s);
        }
    }
    auc(&pairs)
}

fn check_finite(step: usize, loss: f64, grads: &Gradients) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite { step, detail: format!("loss is {loss}") });
    }
    if let Some(g) = grads.flatten().into_iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite { step, detail: format!("gradient entry {g}") });
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, pool: &[usize], k: usize) -> Vec<usize> {
    (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn angular_step(model: &MlpModel, batch: &Dataset, loss: AngularLoss, cfg: &LossConfig) -> Result<(f64, Gradients)> {
    let fwd = model.forward(batch.features.view(), cfg.eps)?;
    let ab = AngularBatch::new(fwd.theta.clone(), batch.labels.clone())?;
    let out = loss.evaluate(&ab, cfg)?;
    Ok((out.value, model.backward(&fwd, &out.grad)?))
}

/// One step of the score objectives on a mixed batch with its labels, plus a
/// label-0 batch and a label-1 batch for the double loss.
fn score_step(
    model: &MlpModel,
    mixed: &Dataset,
    low: ArrayView2<f64>,
    high: ArrayView2<f64>,
    with_double: bool,
    margin: f64,
) -> Result<(f64, Gradients)> {
    let x = concatenate(Axis(0), &[mixed.features.view(), low, high]).map_err(|e| Error::Input(e.to_string()))?;
    let cache = model.forward_raw(x.view())?;
    let scores = cache.output().column(0).to_vec();
    let (nm, nl) = (mixed.len(), low.nrows());
    let labels: Vec<u8> = mixed.labels.iter().map(|&l| l as u8).collect();
    let ce = margin_sigmoid_ce(&scores[..nm], &labels, margin)?;
    let mut d = vec![0.0; scores.len()];
    d[..nm].copy_from_slice(&ce.grad);
    let mut value = ce.value;
    if with_double {
        let probs: Vec<f64> = scores[nm..].iter().map(|&s| sigmoid(s)).collect();
        let pair = ScorePair { low_scores: probs[..nl].to_vec(), high_scores: probs[nl..].to_vec() };
        let dl = double_loss(&pair)?;
        value += dl.value;
        for (k, g) in dl.grad_low.iter().chain(&dl.grad_high).enumerate() {
            d[nm + k] = g * probs[k] * (1.0 - probs[k]);
        }
    }
    let d_out = Array2::from_shape_vec((scores.len(), 1), d).expect("one column");
    let layers = model.backward_raw(&cache, &d_out);
    Ok((value, Gradients { layers, head: Array2::zeros((0, 1)) }))
}

/// Train from scratch on the synthetic split described by `cfg.data`.
///
/// Deterministic for a fixed config: weights, batches and elastic draws all
/// come from seeded generators.
pub fn train_loop(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let (train, held) = synth_split(&cfg.data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let all: Vec<usize> = (0..train.len()).collect();

    let (mut model, metric) = match cfg.objective {
        Objective::Angular(_) => {
            (MlpModel::new(cfg.data.dim, &cfg.hidden, cfg.embed_dim, cfg.data.n_classes, cfg.seed)?, MetricKind::Eer)
        }
        _ => (MlpModel::scorer(cfg.data.dim, &cfg.hidden, cfg.seed)?, MetricKind::Auc),
    };
    let evaluate = |m: &MlpModel| match metric {
        MetricKind::Eer => embedding_eer(m, &held, cfg.loss.eps),
        MetricKind::Auc => score_auc(m, &held),
    };
    let initial_metric = evaluate(&model)?;

    let by_label: Vec<Vec<usize>> =
        (0..cfg.data.n_classes).map(|c| all.iter().copied().filter(|&i| train.labels[i] == c).collect()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    let mut step_ms = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mixed = train.select(&draw(&mut rng, &all, cfg.batch_size));
        let (value, grads) = match cfg.objective {
            Objective::Angular(loss) => {
                let lc = LossConfig { seed: cfg.loss.seed.wrapping_add(step as u64), ..cfg.loss };
                angular_step(&model, &mixed, loss, &lc)
            }
            obj => {
                // both score objectives draw the same batches so their runs
                // share one random stream
                let half = (cfg.batch_size / 2).max(1);
                let low = train.select(&draw(&mut rng, &by_label[0], half));
                let high = train.select(&draw(&mut rng, &by_label[1], half));
                score_step(
                    &model,
                    &mixed,
                    low.features.view(),
                    high.features.view(),
                    obj == Objective::MarginCeDouble,
                    cfg.score_margin,
                )
            }
        }
        .map_err(|e| match e {
            Error::Singularity { .. } | Error::ZeroVector { .. } => Error::NonFinite { step, detail: e.to_string() },
            other => other,
        })?;
        check_finite(step, value, &grads)?;
        loss_curve.push(value);
        model.sgd_step(&grads, cfg.lr)?;
        step_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let final_metric = evaluate(&model)?;
    let report = TrainReport { loss_curve, step_ms, metric, initial_metric, final_metric, config: cfg.echo() };
    Ok(TrainOutcome { report, model })
}

/// Task and objective pair used for the binary comparisons.
pub fn binary_config(task: Task, objective: Objective, seed: u64) -> TrainConfig {
    TrainConfig {
        data: SynthConfig { n_classes: 2, dim: 16, per_class: 200, intra_spread: 0.5, seed, task },
        objective,
        steps: 300,
        lr: 0.1,
        batch_size: 32,
        hidden: vec![32],
        seed,
        ..TrainConfig::default()
    }
}
