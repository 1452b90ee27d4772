//! Grayscale frames: PGM I/O, resampling, the Laplacian sharpness gate and
//! the detection pyramid.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use ndarray::Array2;
use rand::Rng;

use crate::error::{input, Error, Result};

/// Row-major grayscale image with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    /// `pixels` is `height x width`.
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if pixels.is_empty() {
            return input("image has no pixels");
        }
        if pixels.iter().any(|v| !(0.0..=255.0).contains(v)) {
            return input("pixel values must lie in [0, 255]");
        }
        Ok(Self { pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((height, width), |(y, x)| f(x, y)))
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[[y, x]]
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    /// Bilinear sample at `(x, y)` with pixel centres on integer coordinates
    /// and edge pixels repeated outside the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (self.width() as f64, self.height() as f64);
        let x = x.clamp(0.0, w - 1.0);
        let y = y.clamp(0.0, h - 1.0);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = (x0 + 1).min(self.width() - 1);
        let y1 = (y0 + 1).min(self.height() - 1);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize to `width x height`.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return input("resize target must be non-empty");
        }
        let sx = self.width() as f64 / width as f64;
        let sy = self.height() as f64 / height as f64;
        Self::from_fn(width, height, |x, y| self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5))
    }

    /// The region `[x0, x1] x [y0, y1]` (pixel coordinates) resampled to
    /// `width x height`; parts outside the image repeat the edge.
    pub fn crop_resize(&self, x0: f64, y0: f64, x1: f64, y1: f64, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || !(x1 > x0 && y1 > y0) {
            return input("crop region and output size must be non-empty");
        }
        let sx = (x1 - x0) / width as f64;
        let sy = (y1 - y0) / height as f64;
        Self::from_fn(width, height, |x, y| {
            self.sample(x0 + (x as f64 + 0.5) * sx - 0.5, y0 + (y as f64 + 0.5) * sy - 0.5)
        })
    }

    /// Exact copy of the integer window at `(x0, y0)`.
    pub fn window(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width() || y0 + height > self.height() {
            return input("window outside the image");
        }
        Self::new(self.pixels.slice(ndarray::s![y0..y0 + height, x0..x0 + width]).to_owned())
    }

    /// Load a PNM file; colour input is reduced to luminance
    /// `0.299 R + 0.587 G + 0.114 B`.
    pub fn read_pnm(path: &Path) -> Result<Self> {
        let mut reader = ImageReader::open(path)?;
        reader.set_format(ImageFormat::Pnm);
        let img = reader.decode().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if !img.color().has_color() {
            let gray = img.to_luma8();
            let (w, h) = gray.dimensions();
            return Self::from_fn(w as usize, h as usize, |x, y| f64::from(gray.get_pixel(x as u32, y as u32).0[0]));
        }
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_fn(w as usize, h as usize, |x, y| {
            let p = rgb.get_pixel(x as u32, y as u32).0;
            (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])).clamp(0.0, 255.0)
        })
    }

    /// Write as binary 8-bit PGM, rounding to the nearest level.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.pixels.iter().map(|v| v.round() as u8).collect();
        let file = std::fs::File::create(path)?;
        PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, self.width() as u32, self.height() as u32, ExtendedColorType::L8)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Valid-region convolution with `[[0,1,0],[1,-4,1],[0,1,0]]`; the result
/// is `(h - 2) x (w - 2)`.
pub fn laplacian(img: &GrayImage) -> Result<Array2<f64>> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return input("Laplacian needs at least a 3x3 image");
    }
    let p = img.pixels();
    Ok(Array2::from_shape_fn((h - 2, w - 2), |(y, x)| {
        let (cy, cx) = (y + 1, x + 1);
        p[[cy - 1, cx]] + p[[cy + 1, cx]] + p[[cy, cx - 1]] + p[[cy, cx + 1]] - 4.0 * p[[cy, cx]]
    }))
}

pub const DEFAULT_EDGE_PIXEL_THRESHOLD: f64 = 30.0;
pub const DEFAULT_EDGE_COUNT_FRACTION: f64 = 0.005;

/// Count threshold of `DEFAULT_EDGE_COUNT_FRACTION` of the image area, at least 1.
pub fn default_count_threshold(img: &GrayImage) -> usize {
    ((img.width() * img.height()) as f64 * DEFAULT_EDGE_COUNT_FRACTION).ceil().max(1.0) as usize
}

/// `(edge_count >= count_threshold, edge_count)` where `edge_count` counts
/// Laplacian responses with magnitude at least `pixel_threshold`.
pub fn sharpness_gate(img: &GrayImage, pixel_threshold: f64, count_threshold: usize) -> Result<(bool, usize)> {
    let count = laplacian(img)?.iter().filter(|r| r.abs() >= pixel_threshold).count();
    Ok((count >= count_threshold, count))
}

/// Side of the square window the first detection stage scans.
pub const PROPOSAL_SIDE: usize = 12;

/// Levels `s_0 = 12 / min_face`, `s_{k+1} = s_k * factor` while the scaled
/// short side is still at least 12 px.
pub fn pyramid_scales(width: usize, height: usize, min_face: f64, factor: f64) -> Result<Vec<f64>> {
    if !(factor > 0.0 && factor < 1.0) {
        return input(format!("scale factor must be in (0, 1), got {factor}"));
    }
    if !(min_face > 0.0 && min_face.is_finite()) {
        return input("minimum face size must be positive");
    }
    let short = width.min(height) as f64;
    let mut scales = Vec::new();
    let mut s = PROPOSAL_SIDE as f64 / min_face;
    while short * s >= PROPOSAL_SIDE as f64 {
        scales.push(s);
        s *= factor;
    }
    Ok(scales)
}

/// Resized copies of `img` at each pyramid scale, with the scale.
pub fn image_pyramid(img: &GrayImage, min_face: f64, factor: f64) -> Result<Vec<(GrayImage, f64)>> {
    pyramid_scales(img.width(), img.height(), min_face, factor)?
        .into_iter()
        .map(|s| {
            let w = ((img.width() as f64 * s).round() as usize).max(1);
            let h = ((img.height() as f64 * s).round() as usize).max(1);
            Ok((img.resize(w, h)?, s))
        })
        .collect()
}

/// Uniformly placed `out_size x out_size` window, copied unchanged.
pub fn random_resized_crop<R: Rng + ?Sized>(img: &GrayImage, out_size: usize, rng: &mut R) -> Result<GrayImage> {
    if out_size == 0 || out_size > img.width() || out_size > img.height() {
        return input(format!("crop of {out_size} does not fit a {}x{} image", img.width(), img.height()));
    }
    let x0 = rng.random_range(0..=img.width() - out_size);
    let y0 = rng.random_range(0..=img.height() - out_size);
    img.window(x0, y0, out_size, out_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn impulse() -> GrayImage {
        GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 255.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(GrayImage::filled(2, 2, 256.0).is_err());
        assert!(GrayImage::filled(2, 2, -1.0).is_err());
        assert!(GrayImage::new(Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn laplacian_of_constant_and_ramp_is_zero() {
        let c = GrayImage::filled(6, 4, 80.0).unwrap();
        assert!(laplacian(&c).unwrap().iter().all(|&v| v == 0.0));
        let ramp = GrayImage::from_fn(8, 6, |x, y| 10.0 + 3.0 * x as f64 + 7.0 * y as f64).unwrap();
        let l = laplacian(&ramp).unwrap();
        assert_eq!(l.dim(), (4, 6));
        assert!(l.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_impulse() {
        let l = laplacian(&impulse()).unwrap();
        assert_eq!(l[[1, 1]], -1020.0);
        for (y, x) in [(0, 1), (2, 1), (1, 0), (1, 2)] {
            assert_eq!(l[[y, x]], 255.0);
        }
        assert_eq!(l[[0, 0]], 0.0);
    }

    #[test]
    fn sharpness_examples() {
        assert_eq!(sharpness_gate(&GrayImage::filled(10, 10, 0.0).unwrap(), 30.0, 1).unwrap(), (false, 0));
        assert_eq!(sharpness_gate(&impulse(), 300.0, 1).unwrap(), (true, 1));
        let checker = GrayImage::from_fn(7, 5, |x, y| if (x + y) % 2 == 0 { 255.0 } else { 0.0 }).unwrap();
        assert_eq!(sharpness_gate(&checker, 255.0, 15).unwrap(), (true, 15));
    }

    #[test]
    fn pyramid_recurrence() {
        let s = pyramid_scales(240, 240, 48.0, 0.709).unwrap();
        let sides: Vec<f64> = s.iter().map(|k| 240.0 * k).collect();
        assert_eq!(sides.len(), 5);
        assert!((sides[0] - 60.0).abs() < 1e-12);
        assert!((sides[1] - 42.54).abs() < 1e-9);
        assert!(sides.iter().all(|&v| v >= 12.0));
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        let levels = image_pyramid(&GrayImage::filled(240, 240, 1.0).unwrap(), 48.0, 0.709).unwrap();
        assert_eq!(levels[0].0.width(), 60);
        assert_eq!(levels[1].0.width(), 43);
    }

    #[test]
    fn pyramid_of_tiny_image_is_empty() {
        assert!(pyramid_scales(20, 20, 48.0, 0.709).unwrap().is_empty());
        assert!(pyramid_scales(20, 20, 48.0, 1.0).is_err());
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 10 + y) as f64).unwrap();
        assert_eq!(img.resize(5, 4).unwrap(), img);
    }

    #[test]
    fn random_crop_bounds_and_determinism() {
        let img = GrayImage::from_fn(56, 56, |x, y| ((x + 56 * y) % 256) as f64).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(random_resized_crop(&img, 24, &mut a).unwrap(), random_resized_crop(&img, 24, &mut b).unwrap());
        assert_eq!(random_resized_crop(&img, 56, &mut a).unwrap(), img);
        assert!(random_resized_crop(&img, 57, &mut a).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let img = GrayImage::from_fn(7, 3, |x, y| (x * 30 + y) as f64).unwrap();
        img.write_pgm(&path).unwrap();
        assert_eq!(GrayImage::read_pnm(&path).unwrap(), img);
    }
}
