//! Eye-line alignment and eye crops.

use super::detect::{DetectionBox, Landmarks, Point};
use super::image::GrayImage;
use crate::error::{input, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFace {
    /// The box region of the rotated frame.
    pub image: GrayImage,
    /// Landmarks in `image` coordinates.
    pub landmarks: Landmarks,
    /// Rotation removed from the frame, radians.
    pub angle: f64,
}

/// Angle of the eye line, `atan(dy / dx)`; in `[-pi/2, pi/2]`.
pub fn eye_angle(left: Point, right: Point) -> Result<f64> {
    let (dx, dy) = (right.x - left.x, right.y - left.y);
    let a = (dy / dx).atan();
    if a.is_nan() {
        return input("eye landmarks coincide");
    }
    Ok(a)
}

fn rotate(p: Point, c: Point, angle: f64) -> Point {
    let (s, co) = angle.sin_cos();
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    Point::new(c.x + co * dx - s * dy, c.y + s * dx + co * dy)
}

/// Rotate the frame about the eye midpoint so the eyes are level, then cut
/// out the box. Resampling is bilinear with edge clamping.
pub fn align(img: &GrayImage, face: &DetectionBox) -> Result<AlignedFace> {
    let lm = face.landmarks.ok_or_else(|| crate::Error::Input("box has no landmarks".into()))?;
    let angle = eye_angle(lm[0], lm[1])?;
    let c = Point::new(0.5 * (lm[0].x + lm[1].x), 0.5 * (lm[0].y + lm[1].y));
    let w = face.width().round().max(1.0) as usize;
    let h = face.height().round().max(1.0) as usize;
    let image = GrayImage::from_fn(w, h, |x, y| {
        // output pixel -> aligned frame -> source frame
        let src = rotate(Point::new(face.x1 + x as f64, face.y1 + y as f64), c, angle);
        img.sample(src.x, src.y)
    })?;
    let landmarks = lm.map(|p| {
        let q = rotate(p, c, -angle);
        Point::new(q.x - face.x1, q.y - face.y1)
    });
    Ok(AlignedFace { image, landmarks, angle })
}

/// Crops of `floor(W/6) x floor(H/10)` centred on each eye and shifted to
/// stay inside the face.
pub fn eye_crops(face: &GrayImage, left: Point, right: Point) -> Result<(GrayImage, GrayImage)> {
    let cw = face.width() / 6;
    let ch = face.height() / 10;
    if cw == 0 || ch == 0 {
        return input(format!("face of {}x{} is too small for eye crops", face.width(), face.height()));
    }
    let crop = |p: Point| {
        let x0 = (p.x - (cw as f64 - 1.0) / 2.0).round().clamp(0.0, (face.width() - cw) as f64);
        let y0 = (p.y - (ch as f64 - 1.0) / 2.0).round().clamp(0.0, (face.height() - ch) as f64);
        face.window(x0 as usize, y0 as usize, cw, ch)
    };
    Ok((crop(left)?, crop(right)?))
}
