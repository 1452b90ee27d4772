//! Face-authentication plumbing around pluggable scorers: frames, the
//! sharpness gate, detection, alignment, the gallery and the decision logic.

mod align;
mod auth;
mod detect;
mod gallery;
mod image;

pub use align::{align, eye_angle, eye_crops, AlignedFace};
pub use auth::{
    authenticate, spoof_gate, AuthOutcome, AuthThresholds, ConstantSpoof, Embedder, EyeClassifier, EyeState,
    FaceDetector, OpenEyes, Scorers, SpoofScorer, ToyEmbedder, WholeFrameDetector, DEFAULT_SPOOF_THRESHOLD,
};
pub use detect::{
    detect, iou, largest_box, min_face_filter, nms, nms_indices, DetectConfig, DetectionBox, FaceScorer, Landmarks,
    Point, Rect, StageScore, Window,
};
pub use gallery::{
    EnrollStatus, Enrollment, Gallery, Identity, MatchResult, DEFAULT_SIMILARITY_THRESHOLD, MAX_PER_IDENTITY,
};
pub use image::{
    default_count_threshold, image_pyramid, laplacian, pyramid_scales, random_resized_crop, sharpness_gate, GrayImage,
    DEFAULT_EDGE_COUNT_FRACTION, DEFAULT_EDGE_PIXEL_THRESHOLD, PROPOSAL_SIDE,
};
