//! Boxes, IoU, greedy NMS and the three-stage detection cascade around a
//! pluggable scorer.

use std::fmt::Write as _;

use super::image::{image_pyramid, GrayImage, PROPOSAL_SIDE};
use crate::error::{input, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Left eye, right eye, nose, left mouth corner, right mouth corner.
pub type Landmarks = [Point; 5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub confidence: f64,
    pub landmarks: Option<Landmarks>,
}

impl DetectionBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Self {
        Self { x1, y1, x2, y2, confidence, landmarks: None }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2 && (0.0..=1.0).contains(&self.confidence)
    }

    /// `x1,y1,x2,y2,confidence` followed by ten landmark coordinates when present.
    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{},{},{},{}", self.x1, self.y1, self.x2, self.y2, self.confidence);
        if let Some(lm) = &self.landmarks {
            for p in lm {
                let _ = write!(s, ",{},{}", p.x, p.y);
            }
        }
        s
    }
}

pub fn iou(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Indices kept by greedy suppression, in the order they were kept.
///
/// Boxes are visited by descending confidence, ties by lower index; a box is
/// dropped when its IoU with an already kept box is at least `threshold`.
pub fn nms_indices(boxes: &[DetectionBox], threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| iou(&boxes[k], &boxes[i]) < threshold) {
            kept.push(i);
        }
    }
    kept
}

pub fn nms(boxes: &[DetectionBox], threshold: f64) -> Vec<DetectionBox> {
    nms_indices(boxes, threshold).into_iter().map(|i| boxes[i]).collect()
}

/// Keep boxes at least a fifth of the frame width wide.
pub fn min_face_filter(boxes: &[DetectionBox], frame_width: usize) -> Vec<DetectionBox> {
    boxes.iter().copied().filter(|b| b.width() * 5.0 >= frame_width as f64).collect()
}

/// Axis-aligned region in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// A resampled patch and the region of the original frame it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub patch: GrayImage,
    pub rect: Rect,
}

/// One stage's verdict on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageScore {
    pub confidence: f64,
    /// Corrections to `x1, y1, x2, y2` as fractions of the window width/height.
    pub offsets: [f64; 4],
    /// Landmarks as fractions of the window, from the last stage only.
    pub landmarks: Option<Landmarks>,
}

impl StageScore {
    pub fn reject() -> Self {
        Self { confidence: 0.0, offsets: [0.0; 4], landmarks: None }
    }
}

/// Face/non-face scorer for the three cascade stages (12, 24 and 48 px
/// inputs). Implementations only need the patch; the rectangle is there for
/// synthetic scorers.
pub trait FaceScorer {
    fn propose(&self, window: &Window) -> StageScore;
    fn refine(&self, window: &Window) -> StageScore;
    fn output(&self, window: &Window) -> StageScore;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub min_face: f64,
    pub scale_factor: f64,
    pub stride: usize,
    pub confidence: [f64; 3],
    pub nms_iou: [f64; 3],
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { min_face: 24.0, scale_factor: 0.709, stride: 2, confidence: [0.6, 0.7, 0.7], nms_iou: [0.7, 0.7, 0.7] }
    }
}

fn regress(rect: Rect, score: &StageScore) -> DetectionBox {
    let (w, h) = (rect.x2 - rect.x1, rect.y2 - rect.y1);
    let o = score.offsets;
    let landmarks = score.landmarks.map(|lm| lm.map(|p| Point::new(rect.x1 + p.x * w, rect.y1 + p.y * h)));
    DetectionBox {
        x1: rect.x1 + o[0] * w,
        y1: rect.y1 + o[1] * h,
        x2: rect.x2 + o[2] * w,
        y2: rect.y2 + o[3] * h,
        confidence: score.confidence.clamp(0.0, 1.0),
        landmarks,
    }
}

fn rescore(
    img: &GrayImage,
    boxes: &[DetectionBox],
    side: usize,
    threshold: f64,
    stage: impl Fn(&Window) -> StageScore,
) -> Result<Vec<DetectionBox>> {
    let mut out = Vec::new();
    for b in boxes.iter().filter(|b| b.x2 > b.x1 && b.y2 > b.y1) {
        let rect = Rect { x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 };
        let patch = img.crop_resize(b.x1, b.y1, b.x2, b.y2, side, side)?;
        let score = stage(&Window { patch, rect });
        if score.confidence >= threshold {
            out.push(regress(rect, &score));
        }
    }
    Ok(out)
}

/// Scan the pyramid with 12 px windows, then rescore survivors at 24 and
/// 48 px. Each stage drops boxes under its confidence threshold and applies
/// NMS; returned boxes are in original-image coordinates.
pub fn detect(img: &GrayImage, scorer: &dyn FaceScorer, cfg: &DetectConfig) -> Result<Vec<DetectionBox>> {
    if cfg.stride == 0 {
        return input("stride must be positive");
    }
    let mut proposals = Vec::new();
    for (level, scale) in image_pyramid(img, cfg.min_face, cfg.scale_factor)? {
        if level.width() < PROPOSAL_SIDE || level.height() < PROPOSAL_SIDE {
            continue;
        }
        for y in (0..=level.height() - PROPOSAL_SIDE).step_by(cfg.stride) {
            for x in (0..=level.width() - PROPOSAL_SIDE).step_by(cfg.stride) {
                let patch = level.window(x, y, PROPOSAL_SIDE, PROPOSAL_SIDE)?;
                let rect = Rect {
                    x1: x as f64 / scale,
                    y1: y as f64 / scale,
                    x2: (x + PROPOSAL_SIDE) as f64 / scale,
                    y2: (y + PROPOSAL_SIDE) as f64 / scale,
                };
                let score = scorer.propose(&Window { patch, rect });
                if score.confidence >= cfg.confidence[0] {
                    proposals.push(regress(rect, &StageScore { landmarks: None, ..score }));
                }
            }
        }
    }
    let stage1 = nms(&proposals, cfg.nms_iou[0]);
    let stage2 = nms(&rescore(img, &stage1, 24, cfg.confidence[1], |w| scorer.refine(w))?, cfg.nms_iou[1]);
    let stage3 = rescore(img, &stage2, 48, cfg.confidence[2], |w| scorer.output(w))?;
    Ok(nms(&stage3, cfg.nms_iou[2]))
}

/// Box with the largest area; the first one wins ties.
pub fn largest_box(boxes: &[DetectionBox]) -> Option<DetectionBox> {
    boxes.iter().copied().fold(None, |best: Option<DetectionBox>, b| match best {
        Some(c) if c.area() >= b.area() => Some(c),
        _ => Some(b),
    })
}
