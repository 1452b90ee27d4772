//! Seeded synthetic datasets: class prototypes on the unit sphere plus
//! Gaussian noise, or two overlapping clusters for the binary tasks.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Embedding,
    BinaryLiveSpoof,
    BinaryEyeState,
}

impl Task {
    pub fn is_binary(self) -> bool {
        !matches!(self, Task::Embedding)
    }

    fn salt(self) -> u64 {
        match self {
            Task::Embedding => 0,
            Task::BinaryLiveSpoof => 0x5eed_1a7e,
            Task::BinaryEyeState => 0xe1e5_7a7e,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Embedding => "embedding",
            Task::BinaryLiveSpoof => "live-spoof",
            Task::BinaryEyeState => "eye-state",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Task::Embedding, Task::BinaryLiveSpoof, Task::BinaryEyeState]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Standard deviation of the per-coordinate noise.
    pub intra_spread: f64,
    pub seed: u64,
    pub task: Task,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_classes: 10, dim: 16, per_class: 50, intra_spread: 0.1, seed: 0, task: Task::Embedding }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows at `idx` as a new dataset.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

// independent ChaCha streams under one seed
const PROTOTYPE_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const HELD_OUT_STREAM: u64 = 2;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class < 2 {
            return Err(Error::Config("per_class must be at least 2".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if !(self.intra_spread >= 0.0 && self.intra_spread.is_finite()) {
            return Err(Error::Config("intra_spread must be finite and >= 0".into()));
        }
        if self.task.is_binary() {
            if self.n_classes != 2 {
                return Err(Error::Config("binary tasks have exactly 2 classes".into()));
            }
        } else if self.n_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.task.salt());
        rng.set_stream(stream);
        rng
    }

    /// Class centres: unit vectors for the embedding task, `-u/2` and `+u/2`
    /// along one random unit direction `u` for the binary tasks.
    pub fn prototypes(&self) -> Result<Array2<f64>> {
        self.validate()?;
        let mut rng = self.rng(PROTOTYPE_STREAM);
        let draw_unit = |rng: &mut ChaCha8Rng| loop {
            let v: Array1<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.dot(&v).sqrt();
            if n > 1e-12 {
                break v / n;
            }
        };
        if self.task.is_binary() {
            let u = draw_unit(&mut rng);
            let mut p = Array2::zeros((2, self.dim));
            p.row_mut(0).assign(&(&u * -0.5));
            p.row_mut(1).assign(&(&u * 0.5));
            return Ok(p);
        }
        let mut p = Array2::zeros((self.n_classes, self.dim));
        let mut k = 0;
        while k < self.n_classes {
            let v = draw_unit(&mut rng);
            // redraw on a (practically impossible) duplicate
            if (0..k).all(|j| p.row(j).dot(&v) < 1.0 - 1e-9) {
                p.row_mut(k).assign(&v);
                k += 1;
            }
        }
        Ok(p)
    }

    fn sample(&self, prototypes: &Array2<f64>, stream: u64) -> Dataset {
        let mut rng = self.rng(stream);
        let n = self.n_classes * self.per_class;
        let mut features = Array2::zeros((n, self.dim));
        let mut labels = Vec::with_capacity(n);
        for (i, mut row) in features.outer_iter_mut().enumerate() {
            let c = i / self.per_class;
            for (x, p) in row.iter_mut().zip(prototypes.row(c)) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = p + self.intra_spread * z;
            }
            labels.push(c);
        }
        Dataset { features, labels }
    }
}

/// Training set, grouped by class.
pub fn synth_dataset(data: &SynthConfig) -> Result<Dataset> {
    let p = data.prototypes()?;
    Ok(data.sample(&p, TRAIN_STREAM))
}

/// Training set and a held-out set drawn around the same prototypes with
/// fresh noise.
pub fn synth_split(data: &SynthConfig) -> Result<(Dataset, Dataset)> {
    let p = data.prototypes()?;
    Ok((data.sample(&p, TRAIN_STREAM), data.sample(&p, HELD_OUT_STREAM)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_samples_equal_prototypes() {
        let data = SynthConfig { intra_spread: 0.0, per_class: 3, n_classes: 4, dim: 5, ..Default::default() };
        let p = data.prototypes().unwrap();
        let d = synth_dataset(&data).unwrap();
        for (row, &c) in d.features.outer_iter().zip(&d.labels) {
            assert_eq!(row, p.row(c));
        }
    }

    #[test]
    fn same_seed_same_data_and_split_differs() {
        let data = SynthConfig::default();
        assert_eq!(synth_dataset(&data).unwrap(), synth_dataset(&data).unwrap());
        let (a, b) = synth_split(&data).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_ne!(a.features, b.features);
        let other = SynthConfig { seed: 1, ..data };
        assert_ne!(synth_dataset(&other).unwrap(), a);
    }

    #[test]
    fn within_class_cosine_exceeds_between_class() {
        let data = SynthConfig { n_classes: 10, per_class: 50, intra_spread: 0.1, dim: 16, ..Default::default() };
        let d = synth_dataset(&data).unwrap();
        let unit: Vec<Array1<f64>> = d.features.outer_iter().map(|r| &r / r.dot(&r).sqrt()).collect();
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
        for i in 0..unit.len() {
            for j in i + 1..unit.len() {
                let c = unit[i].dot(&unit[j]);
                if d.labels[i] == d.labels[j] {
                    within += c;
                    nw += 1;
                } else {
                    between += c;
                    nb += 1;
                }
            }
        }
        assert!(within / nw as f64 > between / nb as f64 + 0.5);
    }

    #[test]
    fn binary_tasks_use_distinct_directions() {
        let live = SynthConfig { n_classes: 2, task: Task::BinaryLiveSpoof, ..Default::default() };
        let eye = SynthConfig { task: Task::BinaryEyeState, ..live };
        let pl = live.prototypes().unwrap();
        let pe = eye.prototypes().unwrap();
        assert_ne!(pl, pe);
        let gap = &pl.row(1) - &pl.row(0);
        assert!((gap.dot(&gap).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(synth_dataset(&SynthConfig { per_class: 1, ..Default::default() }).is_err());
        assert!(synth_dataset(&SynthConfig { task: Task::BinaryEyeState, ..Default::default() }).is_err());
        assert!("bogus".parse::<Task>().is_err());
        assert_eq!("eye-state".parse::<Task>().unwrap(), Task::BinaryEyeState);
    }
}
