//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::cell::{Cell, RefCell};

use lmcot::pipeline::Embedder;
use lmcot::pipeline::{iou, DetectionBox, EyeClassifier, EyeState, FaceDetector, GrayImage, Point, SpoofScorer};
use lmcot::Result;
use rand::Rng;

/// Pairwise win probability by double loop.
pub fn brute_auc(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &g in genuine {
        for &i in impostor {
            if g > i {
                wins += 1.0;
            } else if g == i {
                wins += 0.5;
            }
        }
    }
    wins / (genuine.len() * impostor.len()) as f64
}

/// FAR and FRR at `t` by direct counting.
pub fn count_rates(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
    let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
    (far, frr)
}

/// Evaluate every candidate threshold (each score and one above all of them)
/// by counting, then interpolate where `FAR - FRR` first reaches zero.
pub fn brute_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(f64::INFINITY);
    let pts: Vec<(f64, f64)> = ts.iter().map(|&t| count_rates(genuine, impostor, t)).collect();
    for k in 0..pts.len() {
        let d = pts[k].0 - pts[k].1;
        if d == 0.0 {
            return pts[k].0;
        }
        if d < 0.0 {
            let (a, b) = (pts[k - 1], pts[k]);
            let (da, db) = (a.0 - a.1, d);
            let lam = da / (da - db);
            return a.0 + lam * (b.0 - a.0);
        }
    }
    unreachable!("the last candidate rejects everything")
}

/// `max_t min(FAR, FRR)` and `min_t max(FAR, FRR)` over the candidates; any
/// interpolated EER lies between them.
pub fn eer_bounds(genuine: &[f64], impostor: &[f64]) -> (f64, f64) {
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ts.push(f64::INFINITY);
    ts.iter().fold((0.0f64, 1.0f64), |(lo, hi), &t| {
        let (far, frr) = count_rates(genuine, impostor, t);
        (lo.max(far.min(frr)), hi.min(far.max(frr)))
    })
}

/// Among all subsets whose boxes pairwise overlap below `thr` and that cannot
/// be extended, the lexicographically largest in visiting order (confidence
/// descending, lower index first).
pub fn nms_oracle(boxes: &[DetectionBox], thr: f64) -> Vec<usize> {
    let n = boxes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence).then(a.cmp(&b)));
    let compatible = |set: &[usize], i: usize| set.iter().all(|&k| iou(&boxes[k], &boxes[i]) < thr);
    let mut best: Option<Vec<bool>> = None;
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = order.iter().enumerate().filter(|(r, _)| mask >> r & 1 == 1).map(|(_, &i)| i).collect();
        let independent =
            set.iter().enumerate().all(|(a, &i)| set[a + 1..].iter().all(|&j| iou(&boxes[i], &boxes[j]) < thr));
        let maximal = order.iter().all(|i| set.contains(i) || !compatible(&set, *i));
        if !(independent && maximal) {
            continue;
        }
        let key: Vec<bool> = (0..n).map(|r| mask >> r & 1 == 1).collect();
        if best.as_ref().is_none_or(|b| key > *b) {
            best = Some(key);
        }
    }
    let key = best.unwrap_or_default();
    order.iter().enumerate().filter(|(r, _)| key.get(*r).copied().unwrap_or(false)).map(|(_, &i)| i).collect()
}

pub fn random_box<R: Rng>(rng: &mut R) -> DetectionBox {
    let x1 = rng.random_range(0.0..20.0);
    let y1 = rng.random_range(0.0..20.0);
    let w = rng.random_range(1.0..12.0);
    let h = rng.random_range(1.0..12.0);
    // coarse confidences so ties happen
    let c = f64::from(rng.random_range(0..10u8)) / 10.0;
    DetectionBox::new(x1, y1, x1 + w, y1 + h, c)
}

/// Detector that returns one fixed box.
pub struct FixedDetector(pub Vec<DetectionBox>);

impl FaceDetector for FixedDetector {
    fn detect(&self, _: &GrayImage) -> Result<Vec<DetectionBox>> {
        Ok(self.0.clone())
    }
}

pub fn face_box(x1: f64, y1: f64, x2: f64, y2: f64) -> DetectionBox {
    let (w, h) = (x2 - x1, y2 - y1);
    let at = |fx: f64, fy: f64| Point::new(x1 + fx * w, y1 + fy * h);
    let mut b = DetectionBox::new(x1, y1, x2, y2, 0.99);
    b.landmarks = Some([at(0.3, 0.4), at(0.7, 0.42), at(0.5, 0.6), at(0.35, 0.8), at(0.65, 0.8)]);
    b
}

/// Scorers that record every call, in order.
#[derive(Default)]
pub struct Trace {
    pub calls: RefCell<Vec<&'static str>>,
}

pub struct TracedSpoof<'a> {
    pub trace: &'a Trace,
    pub score: f64,
}

impl SpoofScorer for TracedSpoof<'_> {
    fn spoof_score(&self, _: &GrayImage) -> f64 {
        self.trace.calls.borrow_mut().push("spoof");
        self.score
    }
}

pub struct TracedEmbedder<'a> {
    pub trace: &'a Trace,
    pub vector: Vec<f64>,
}

impl Embedder for TracedEmbedder<'_> {
    fn embed(&self, _: &GrayImage) -> Result<Vec<f64>> {
        self.trace.calls.borrow_mut().push("embed");
        Ok(self.vector.clone())
    }
}

/// Answers from a script: the k-th call gets `closed[k]`.
pub struct ScriptedEyes<'a> {
    pub trace: &'a Trace,
    pub closed: Vec<bool>,
    pub next: Cell<usize>,
}

impl EyeClassifier for ScriptedEyes<'_> {
    fn classify(&self, _: &GrayImage) -> EyeState {
        self.trace.calls.borrow_mut().push("eye");
        let k = self.next.get();
        self.next.set(k + 1);
        if self.closed[k % self.closed.len()] {
            EyeState { open: 0.1, closed: 0.9 }
        } else {
            EyeState { open: 0.9, closed: 0.1 }
        }
    }
}
