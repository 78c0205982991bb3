//! Synthetic images and the rotated-image dataset.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::rng::substream;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    /// Values outside `[0, 1]` are clamped; non-finite values are rejected.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("image dimensions must be positive"));
        }
        Error::check_dim("pixel count", width * height, pixels.len())?;
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("pixel {i} is not finite")));
        }
        let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(ImageGrid {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a fractional position; 0 outside the grid.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (libm::floor(x), libm::floor(y));
        let (fx, fy) = (x - x0, y - y0);
        let read = |ix: f64, iy: f64| {
            if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
                0.0
            } else {
                self.get(ix as usize, iy as usize)
            }
        };
        (1.0 - fx) * (1.0 - fy) * read(x0, y0)
            + fx * (1.0 - fy) * read(x0 + 1.0, y0)
            + (1.0 - fx) * fy * read(x0, y0 + 1.0)
            + fx * fy * read(x0 + 1.0, y0 + 1.0)
    }
}

/// 3 to 5 anisotropic Gaussian blobs placed off-center, inside the disk
/// inscribed in the frame so that rotations keep them in view.
pub fn synth_image(size: usize, seed: u64) -> Result<ImageGrid> {
    if size < 8 {
        return Err(Error::input(format!(
            "image size must be at least 8, got {size}"
        )));
    }
    let mut rng = substream(seed, 0);
    let count = rng.random_range(3..=5);
    let s = size as f64;
    let c = 0.5 * (s - 1.0);
    let mut pixels = alloc::vec![0.0; size * size];
    for b in 0..count {
        // Spread the blobs around the center so no rotation maps the image
        // onto itself.
        let angle = 2.0 * PI * (b as f64 + rng.random_range(0.1..0.6)) / count as f64;
        let radius = s * rng.random_range(0.12..0.26);
        let (cx, cy) = (c + radius * libm::cos(angle), c + radius * libm::sin(angle));
        let su = s * rng.random_range(0.1..0.16);
        let sv = s * rng.random_range(0.065..0.09);
        let tilt = rng.random_range(0.0..PI);
        let amp = rng.random_range(0.5..1.0);
        let (ct, st) = (libm::cos(tilt), libm::sin(tilt));
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = (ct * dx + st * dy) / su;
                let v = (-st * dx + ct * dy) / sv;
                pixels[y * size + x] += amp * libm::exp(-0.5 * (u * u + v * v));
            }
        }
    }
    ImageGrid::new(size, size, pixels)
}

/// Rotate about the image center by `angle` radians with bilinear
/// interpolation, reading 0 outside the frame.
pub fn rotate_image(img: &ImageGrid, angle: f64) -> Result<ImageGrid> {
    if img.width != img.height {
        return Err(Error::input(format!(
            "rotation needs a square image, got {}x{}",
            img.width, img.height
        )));
    }
    let n = img.width;
    let c = 0.5 * (n as f64 - 1.0);
    let (s, co) = (libm::sin(angle), libm::cos(angle));
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            // Inverse map: where this output pixel comes from.
            let sx = c + co * dx + s * dy;
            let sy = c - s * dx + co * dy;
            out.push(img.sample(sx, sy));
        }
    }
    ImageGrid::new(n, n, out)
}

/// Column k is the image rotated by `2πk/N`, flattened row-major.
pub fn make_rotation_dataset(img: &ImageGrid, rotations: usize) -> Result<Dataset> {
    if rotations < 2 {
        return Err(Error::input(format!(
            "need at least 2 rotations, got {rotations}"
        )));
    }
    let m = img.pixels.len();
    let mut y = DMatrix::zeros(m, rotations);
    for k in 0..rotations {
        let rotated = rotate_image(img, 2.0 * PI * k as f64 / rotations as f64)?;
        y.set_column(k, &nalgebra::DVector::from_column_slice(&rotated.pixels));
    }
    Dataset::new(y)
}
