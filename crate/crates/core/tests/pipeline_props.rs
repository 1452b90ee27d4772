mod common;

use std::cell::Cell;

use common::*;
use lmcot::pipeline::*;
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = DetectionBox> {
    (0.0f64..20.0, 0.0f64..20.0, 1.0f64..12.0, 1.0f64..12.0, 0u8..10)
        .prop_map(|(x, y, w, h, c)| DetectionBox::new(x, y, x + w, y + h, f64::from(c) / 10.0))
}

proptest! {
    #[test]
    fn nms_matches_exhaustive_search(boxes in prop::collection::vec(arb_box(), 0..8), thr in 0.05f64..0.95) {
        prop_assert_eq!(nms_indices(&boxes, thr), nms_oracle(&boxes, thr));
    }

    #[test]
    fn nms_survivors_overlap_less_than_threshold(boxes in prop::collection::vec(arb_box(), 0..12), thr in 0.05f64..0.95) {
        let kept = nms(&boxes, thr);
        for (a, x) in kept.iter().enumerate() {
            for y in &kept[a + 1..] {
                prop_assert!(iou(x, y) < thr);
            }
        }
    }

    #[test]
    fn gallery_text_round_trip(
        entries in prop::collection::vec((0usize..4, prop::collection::vec(-1e3f64..1e3, 5)), 1..20),
    ) {
        let mut g = Gallery::new();
        for (who, v) in &entries {
            if v.iter().any(|x| *x != 0.0) {
                g.enroll(["ana", "bo lee", "chen", "dee"][*who], v, true).unwrap();
            }
        }
        let text = g.to_text();
        let back = Gallery::from_text(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn laplacian_vanishes_on_affine_images(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let img = GrayImage::from_fn(20, 15, |x, y| 128.0 + a * x as f64 + b * y as f64).unwrap();
        let lap = laplacian(&img).unwrap();
        prop_assert!(lap.iter().all(|v| v.abs() < 1e-9));
        let (sharp, count) = sharpness_gate(&img, DEFAULT_EDGE_PIXEL_THRESHOLD, 1).unwrap();
        prop_assert!(!sharp);
        prop_assert_eq!(count, 0);
    }
}

/// Scores each window by its overlap with planted faces and regresses
/// straight onto the best one.
struct Planted(Vec<DetectionBox>);

impl Planted {
    fn score(&self, w: &Window, with_landmarks: bool) -> StageScore {
        let r = DetectionBox::new(w.rect.x1, w.rect.y1, w.rect.x2, w.rect.y2, 0.0);
        let Some((best, overlap)) = self.0.iter().map(|p| (p, iou(p, &r))).max_by(|a, b| a.1.total_cmp(&b.1)) else {
            return StageScore::reject();
        };
        let (ww, wh) = (r.width(), r.height());
        let offsets = [(best.x1 - r.x1) / ww, (best.y1 - r.y1) / wh, (best.x2 - r.x2) / ww, (best.y2 - r.y2) / wh];
        let landmarks = with_landmarks.then(|| {
            let f = |x: f64, y: f64| {
                Point::new((best.x1 + x * best.width() - r.x1) / ww, (best.y1 + y * best.height() - r.y1) / wh)
            };
            [f(0.3, 0.4), f(0.7, 0.4), f(0.5, 0.6), f(0.35, 0.8), f(0.65, 0.8)]
        });
        StageScore { confidence: overlap, offsets, landmarks }
    }
}

impl FaceScorer for Planted {
    fn propose(&self, w: &Window) -> StageScore {
        self.score(w, false)
    }
    fn refine(&self, w: &Window) -> StageScore {
        self.score(w, false)
    }
    fn output(&self, w: &Window) -> StageScore {
        self.score(w, true)
    }
}

fn close(a: &DetectionBox, b: &DetectionBox, tol: f64) -> bool {
    [(a.x1, b.x1), (a.y1, b.y1), (a.x2, b.x2), (a.y2, b.y2)].iter().all(|(p, q)| (p - q).abs() <= tol)
}

#[test]
fn cascade_recovers_a_planted_face() {
    let img = GrayImage::from_fn(96, 80, |x, y| ((x * 3 + y * 5) % 200) as f64).unwrap();
    let face = DetectionBox::new(30.0, 20.0, 62.0, 54.0, 1.0);
    let found = detect(&img, &Planted(vec![face]), &DetectConfig::default()).unwrap();
    assert_eq!(found.len(), 1, "{found:?}");
    assert!(close(&found[0], &face, 2.0), "{:?}", found[0]);
    let lm = found[0].landmarks.expect("last stage landmarks");
    assert!((lm[0].x - (30.0 + 0.3 * 32.0)).abs() < 1e-6);
}

#[test]
fn cascade_separates_two_faces() {
    let img = GrayImage::filled(160, 90, 90.0).unwrap();
    let faces = vec![DetectionBox::new(8.0, 10.0, 48.0, 52.0, 1.0), DetectionBox::new(100.0, 30.0, 140.0, 70.0, 1.0)];
    let found = detect(&img, &Planted(faces.clone()), &DetectConfig::default()).unwrap();
    assert_eq!(found.len(), 2, "{found:?}");
    for f in &faces {
        assert!(found.iter().any(|b| close(b, f, 2.0)), "{f:?} missing from {found:?}");
    }
}

fn frame() -> GrayImage {
    GrayImage::from_fn(100, 100, |x, y| ((x * 7 + y * 11) % 256) as f64).unwrap()
}

fn run(detector: &dyn FaceDetector, gallery: &Gallery, spoof: f64, closed: Vec<bool>, trace: &Trace) -> AuthOutcome {
    let spoof = TracedSpoof { trace, score: spoof };
    let embedder = TracedEmbedder { trace, vector: vec![0.0, 1.0, 0.0] };
    let eyes = ScriptedEyes { trace, closed, next: Cell::new(0) };
    let scorers = Scorers { detector, spoof: &spoof, embedder: &embedder, eyes: &eyes };
    authenticate(&frame(), gallery, &scorers, &AuthThresholds::default()).unwrap()
}

fn gallery() -> Gallery {
    let mut g = Gallery::new();
    g.enroll("ana", &[0.0, 1.0, 0.1], true).unwrap();
    g
}

#[test]
fn no_detection_is_no_face() {
    let trace = Trace::default();
    assert_eq!(run(&FixedDetector(vec![]), &gallery(), 0.0, vec![false], &trace), AuthOutcome::NoFace);
    assert!(trace.calls.borrow().is_empty());
}

#[test]
fn tiny_face_is_no_face() {
    let det = FixedDetector(vec![face_box(10.0, 10.0, 15.0, 15.0)]);
    assert_eq!(run(&det, &gallery(), 0.0, vec![false], &Trace::default()), AuthOutcome::NoFace);
}

#[test]
fn fake_frame_is_invalid_face() {
    let det = FixedDetector(vec![face_box(10.0, 10.0, 90.0, 90.0)]);
    let out = run(&det, &gallery(), 0.8, vec![false], &Trace::default());
    assert_eq!(out, AuthOutcome::InvalidFace { spoof_score: 0.8 });
}

#[test]
fn unknown_face_is_stranger() {
    let det = FixedDetector(vec![face_box(10.0, 10.0, 90.0, 90.0)]);
    let mut g = Gallery::new();
    g.enroll("bo", &[1.0, 0.0, 0.0], true).unwrap();
    let trace = Trace::default();
    assert_eq!(run(&det, &g, 0.1, vec![false], &trace), AuthOutcome::Stranger { best: 0.0 });
    assert_eq!(*trace.calls.borrow(), ["spoof", "embed"]);
}

#[test]
fn one_open_eye_is_enough() {
    let det = FixedDetector(vec![face_box(10.0, 10.0, 90.0, 90.0)]);
    for script in [vec![true, false], vec![false, true], vec![false, false]] {
        assert!(run(&det, &gallery(), 0.1, script, &Trace::default()).is_accepted());
    }
    let out = run(&det, &gallery(), 0.1, vec![true, true], &Trace::default());
    assert_eq!(out, AuthOutcome::EyesClosed { identity: "ana".into() });
}

#[test]
fn largest_face_is_used() {
    let det = FixedDetector(vec![face_box(0.0, 0.0, 30.0, 30.0), face_box(10.0, 10.0, 90.0, 90.0)]);
    assert!(run(&det, &gallery(), 0.1, vec![false], &Trace::default()).is_accepted());
}

#[test]
fn pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.pgm");
    let img = frame();
    img.write_pgm(&path).unwrap();
    assert_eq!(GrayImage::read_pnm(&path).unwrap(), img);
}
