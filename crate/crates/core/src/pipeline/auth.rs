//! The authentication decision sequence and simple stand-in scorers.

use std::fmt;

use ndarray::Array2;

use super::align::{align, eye_crops};
use super::detect::{largest_box, min_face_filter, DetectionBox, Point};
use super::gallery::{Gallery, MatchResult, DEFAULT_SIMILARITY_THRESHOLD};
use super::image::GrayImage;
use crate::error::Result;
use crate::train::MlpModel;

pub const DEFAULT_SPOOF_THRESHOLD: f64 = 0.65;

/// `true` when the frame counts as live: fake iff `score >= threshold`.
pub fn spoof_gate(score: f64, threshold: f64) -> bool {
    score < threshold
}

pub trait FaceDetector {
    fn detect(&self, frame: &GrayImage) -> Result<Vec<DetectionBox>>;
}

pub trait SpoofScorer {
    /// Higher means more likely fake.
    fn spoof_score(&self, frame: &GrayImage) -> f64;
}

pub trait Embedder {
    fn embed(&self, face: &GrayImage) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeState {
    pub open: f64,
    pub closed: f64,
}

impl EyeState {
    pub fn is_closed(&self) -> bool {
        self.closed > self.open
    }
}

pub trait EyeClassifier {
    fn classify(&self, eye: &GrayImage) -> EyeState;
}

pub struct Scorers<'a> {
    pub detector: &'a dyn FaceDetector,
    pub spoof: &'a dyn SpoofScorer,
    pub embedder: &'a dyn Embedder,
    pub eyes: &'a dyn EyeClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthThresholds {
    pub spoof: f64,
    pub similarity: f64,
}

impl Default for AuthThresholds {
    fn default() -> Self {
        Self { spoof: DEFAULT_SPOOF_THRESHOLD, similarity: DEFAULT_SIMILARITY_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuthOutcome {
    NoFace,
    InvalidFace { spoof_score: f64 },
    Stranger { best: f64 },
    EyesClosed { identity: String },
    Accepted { identity: String, similarity: f64 },
}

impl AuthOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, AuthOutcome::Accepted { .. })
    }
}

impl fmt::Display for AuthOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuthOutcome::NoFace => write!(f, "no-face"),
            AuthOutcome::InvalidFace { spoof_score } => write!(f, "invalid-face spoof_score={spoof_score}"),
            AuthOutcome::Stranger { best } => write!(f, "stranger best_similarity={best}"),
            AuthOutcome::EyesClosed { identity } => write!(f, "eyes-closed identity={identity}"),
            AuthOutcome::Accepted { identity, similarity } => {
                write!(f, "accepted identity={identity} similarity={similarity}")
            }
        }
    }
}

/// Largest face, size check, alignment, spoof check on the full frame,
/// gallery match, eye check. The first stage that fails decides the outcome.
///
/// Errors are reserved for misuse such as an embedder whose dimension does
/// not match the gallery.
pub fn authenticate(
    frame: &GrayImage,
    gallery: &Gallery,
    scorers: &Scorers<'_>,
    thresholds: &AuthThresholds,
) -> Result<AuthOutcome> {
    let boxes = scorers.detector.detect(frame)?;
    let Some(face) = largest_box(&boxes) else {
        return Ok(AuthOutcome::NoFace);
    };
    if min_face_filter(&[face], frame.width()).is_empty() {
        return Ok(AuthOutcome::NoFace);
    }
    let Ok(aligned) = align(frame, &face) else {
        return Ok(AuthOutcome::NoFace);
    };
    let spoof_score = scorers.spoof.spoof_score(frame);
    if !spoof_gate(spoof_score, thresholds.spoof) {
        return Ok(AuthOutcome::InvalidFace { spoof_score });
    }
    let probe = scorers.embedder.embed(&aligned.image)?;
    let (identity, similarity) = match gallery.match_probe(&probe, thresholds.similarity)? {
        MatchResult::Stranger { best } => return Ok(AuthOutcome::Stranger { best }),
        MatchResult::Known { name, similarity } => (name, similarity),
    };
    let (left, right) = eye_crops(&aligned.image, aligned.landmarks[0], aligned.landmarks[1])?;
    let (l, r) = (scorers.eyes.classify(&left), scorers.eyes.classify(&right));
    if l.is_closed() && r.is_closed() {
        return Ok(AuthOutcome::EyesClosed { identity });
    }
    Ok(AuthOutcome::Accepted { identity, similarity })
}

/// Treats the whole frame as one face with landmarks at fixed fractions of
/// the frame, for inputs that are already face crops.
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeFrameDetector;

impl FaceDetector for WholeFrameDetector {
    fn detect(&self, frame: &GrayImage) -> Result<Vec<DetectionBox>> {
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        let at = |fx: f64, fy: f64| Point::new(fx * (w - 1.0), fy * (h - 1.0));
        let mut b = DetectionBox::new(0.0, 0.0, w, h, 1.0);
        b.landmarks = Some([at(0.3, 0.4), at(0.7, 0.4), at(0.5, 0.6), at(0.35, 0.8), at(0.65, 0.8)]);
        Ok(vec![b])
    }
}

/// Returns the same spoof score for every frame.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSpoof(pub f64);

impl SpoofScorer for ConstantSpoof {
    fn spoof_score(&self, _: &GrayImage) -> f64 {
        self.0
    }
}

/// Reports every eye as open.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenEyes;

impl EyeClassifier for OpenEyes {
    fn classify(&self, _: &GrayImage) -> EyeState {
        EyeState { open: 1.0, closed: 0.0 }
    }
}

/// Embeds a face by resizing it to `side x side`, scaling to `[0, 1]` and
/// running an [`MlpModel`].
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    pub model: MlpModel,
    pub side: usize,
}

impl ToyEmbedder {
    pub const DEFAULT_SIDE: usize = 16;

    /// Seed-fixed random network `side^2 -> 64 -> embed_dim`.
    pub fn seeded(seed: u64, embed_dim: usize) -> Result<Self> {
        let side = Self::DEFAULT_SIDE;
        Ok(Self { model: MlpModel::new(side * side, &[64], embed_dim, 0, seed)?, side })
    }

    /// Wrap a model whose input width is a square number of pixels.
    pub fn from_model(model: MlpModel) -> Result<Self> {
        let n = model.input_dim();
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return crate::error::input(format!("model input width {n} is not a square image"));
        }
        Ok(Self { model, side })
    }
}

impl Embedder for ToyEmbedder {
    fn embed(&self, face: &GrayImage) -> Result<Vec<f64>> {
        let small = face.resize(self.side, self.side)?;
        let x = Array2::from_shape_vec((1, self.side * self.side), small.pixels().iter().map(|v| v / 255.0).collect())
            .expect("side x side pixels");
        Ok(self.model.embed(x.view(), 1e-12)?.row(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spoof_cutoff_is_inclusive() {
        assert!(!spoof_gate(0.65, DEFAULT_SPOOF_THRESHOLD));
        assert!(spoof_gate(0.649, DEFAULT_SPOOF_THRESHOLD));
        assert!(spoof_gate(0.0, DEFAULT_SPOOF_THRESHOLD));
    }

    #[test]
    fn outcome_display() {
        assert_eq!(AuthOutcome::NoFace.to_string(), "no-face");
        let a = AuthOutcome::Accepted { identity: "ana".into(), similarity: 0.75 };
        assert_eq!(a.to_string(), "accepted identity=ana similarity=0.75");
        assert!(a.is_accepted());
    }

    #[test]
    fn toy_embedder_is_deterministic_and_unit() {
        let face = GrayImage::from_fn(40, 48, |x, y| ((x * 7 + y * 3) % 256) as f64).unwrap();
        let a = ToyEmbedder::seeded(3, 8).unwrap().embed(&face).unwrap();
        let b = ToyEmbedder::seeded(3, 8).unwrap().embed(&face).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_model_needs_square_input() {
        assert_eq!(ToyEmbedder::from_model(MlpModel::new(36, &[4], 3, 0, 0).unwrap()).unwrap().side, 6);
        assert!(ToyEmbedder::from_model(MlpModel::new(10, &[4], 3, 0, 0).unwrap()).is_err());
    }
}
