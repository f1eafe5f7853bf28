//! Raster types and the low-level image operations shared by every stage.
//!
//! [`Plane`] is an unconstrained `f64` raster used for intermediate maps
//! (variances, reflectance layers, spectra magnitudes). [`GrayImage`] wraps a
//! plane whose samples are guaranteed to lie in `[0, 1]`.

mod fft;
mod gradient;
mod io;
mod window;

pub use fft::{fft2, ifft2, signed_frequency, Fft2d, Spectrum};
pub use gradient::{gradient, mig, GradientField, MIN_GRADIENT_SIZE};
pub use io::{read_image, read_pgm, write_image, write_pgm, ImageFormat};
pub use window::{box_mean, local_mean, local_std, local_variance, Padding, WindowSpec};

use crate::error::{Error, Result};
use std::ops::Deref;

/// Row-major `f64` raster with no range constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ImageTooSmall {
                width,
                height,
                min: 1,
            });
        }
        if data.len() != width * height {
            return Err(Error::BadLength {
                width,
                height,
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized plane");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized plane");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Sample with replicate padding outside the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation with replicate padding.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi);
        let b = self.get_clamped(xi + 1, yi);
        let c = self.get_clamped(xi, yi + 1);
        let d = self.get_clamped(xi + 1, yi + 1);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        top + (bottom - top) * fy
    }

    pub fn same_dims(&self, other: &Plane) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination. Panics on dimension mismatch.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "zip_map on mismatched planes"
        );
        Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Arithmetic mean, summed in row-major order.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Single-channel image with every intensity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Plane);

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::try_from_plane(Plane::new(width, height, data)?)
    }

    pub fn try_from_plane(plane: Plane) -> Result<Self> {
        if let Some((index, &value)) = plane
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(Self(plane))
    }

    /// Clamps every sample into `[0, 1]`; NaN maps to 0.
    pub fn from_plane_clamped(mut plane: Plane) -> Self {
        for v in &mut plane.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self(plane)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_plane_clamped(Plane::filled(width, height, value))
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_plane_clamped(Plane::from_fn(width, height, f))
    }

    /// Linear map of 8-bit samples onto `[0, 1]`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(Self(Plane::new(width, height, data)?))
    }

    /// Nearest 8-bit code for each intensity.
    pub fn to_u8(&self) -> Vec<u8> {
        self.0
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Round-trips through 8-bit quantization.
    pub fn quantized(&self) -> GrayImage {
        let bytes = self.to_u8();
        GrayImage::from_u8(self.width(), self.height(), &bytes).expect("same dimensions")
    }

    #[inline]
    pub fn as_plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

impl Deref for GrayImage {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.0
    }
}

impl From<GrayImage> for Plane {
    fn from(img: GrayImage) -> Plane {
        img.0
    }
}

/// Root-mean-square difference of two same-sized rasters.
pub fn rmse(a: &Plane, b: &Plane) -> f64 {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (sum / a.len() as f64).sqrt()
}

/// Peak signal-to-noise ratio in dB for unit-peak images.
pub fn psnr(a: &Plane, b: &Plane) -> f64 {
    let e = rmse(a, b);
    if e == 0.0 {
        f64::INFINITY
    } else {
        -20.0 * e.log10()
    }
}
