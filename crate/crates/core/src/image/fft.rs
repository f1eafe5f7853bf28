use super::Plane;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Unshifted 2D spectrum: index `(0, 0)` holds the DC term.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[v * self.width + u]
    }
}

/// Planned row/column transforms for one raster size. Any size is
/// supported (mixed-radix and Bluestein plans), so no padding is needed.
#[derive(Clone)]
pub struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// In-place forward transform of a row-major buffer.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// In-place inverse transform, including the `1 / (w h)` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.width * self.height) as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        assert_eq!(buf.len(), w * h, "buffer does not match planned size");
        rows.process(buf);
        let mut t = transpose(buf, w, h);
        cols.process(&mut t);
        let back = transpose(&t, h, w);
        buf.copy_from_slice(&back);
    }
}

fn transpose(src: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
    dst
}

/// Forward 2D DFT of a real raster.
pub fn fft2(img: &Plane) -> Spectrum {
    let plan = Fft2d::new(img.width(), img.height());
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut data);
    Spectrum {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Inverse 2D DFT, keeping the real part.
pub fn ifft2(spec: &Spectrum) -> Plane {
    let plan = Fft2d::new(spec.width, spec.height);
    let mut data = spec.data.clone();
    plan.inverse(&mut data);
    Plane::new(spec.width, spec.height, data.into_iter().map(|c| c.re).collect())
        .expect("spectrum dimensions are valid")
}

/// Signed integer frequency (cycles per image) for unshifted index `k` of an
/// axis of length `n`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
