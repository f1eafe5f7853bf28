//! Synthetic ground truth: speckle patterns, exposure and heat-haze
//! degradations, and two physical helper formulas.
//!
//! All randomness comes from `ChaCha8Rng` seeded with the parameter struct's
//! `seed`, so outputs are reproducible across platforms.

use crate::error::{Error, Result};
use crate::image::{Fft2d, GrayImage, Plane};
use crate::restoration::{apply_otf, TurbulenceParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const LIGHT_SPEED: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeckleSpec {
    pub width: usize,
    pub height: usize,
    /// Dots per 1000 px^2.
    pub dot_density: f64,
    pub dot_radius_mean: f64,
    pub dot_radius_std: f64,
    pub background: f64,
    pub dot_intensity: f64,
    pub seed: u64,
}

impl Default for SpeckleSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            dot_density: 8.0,
            dot_radius_mean: 3.0,
            dot_radius_std: 0.5,
            background: 0.85,
            dot_intensity: 0.1,
            seed: 0,
        }
    }
}

impl SpeckleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::EmptyInput);
        }
        if !(self.dot_density >= 0.0 && self.dot_density.is_finite()) {
            return Err(Error::InvalidParameter("dot_density must be >= 0".into()));
        }
        if !(self.dot_radius_mean > 0.0 && self.dot_radius_std >= 0.0) {
            return Err(Error::InvalidParameter("dot radii must be > 0".into()));
        }
        for v in [self.background, self.dot_intensity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter("intensities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Random dots with one-pixel anti-aliased rims on a uniform background.
pub fn gen_speckle(spec: &SpeckleSpec) -> Result<GrayImage> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radius_dist = Normal::new(spec.dot_radius_mean, spec.dot_radius_std)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let count = (spec.dot_density * (w * h) as f64 / 1000.0).round() as usize;
    let mut coverage = vec![0.0f64; w * h];
    let min_radius = 0.25 * spec.dot_radius_mean;
    for _ in 0..count {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let r = radius_dist.sample(&mut rng).max(min_radius);
        let x0 = (cx - r - 1.0).floor().max(0.0) as usize;
        let y0 = (cy - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((cx + r + 1.0).ceil() as usize).min(w - 1);
        let y1 = ((cy + r + 1.0).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy);
                let c = (r + 0.5 - d).clamp(0.0, 1.0);
                let slot = &mut coverage[y * w + x];
                if c > *slot {
                    *slot = c;
                }
            }
        }
    }
    let (bg, fg) = (spec.background, spec.dot_intensity);
    GrayImage::new(w, h, coverage.into_iter().map(|c| bg + (fg - bg) * c).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureMode {
    Under,
    Over,
}

impl std::str::FromStr for ExposureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "under" => Ok(Self::Under),
            "over" => Ok(Self::Over),
            _ => Err(Error::InvalidParameter(format!("unknown exposure mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDegradation {
    pub image: GrayImage,
    /// Pixels pushed to 1 (over) or quantized to black (under).
    pub clipped: Vec<bool>,
}

impl ExposureDegradation {
    pub fn clipped_fraction(&self) -> f64 {
        self.clipped.iter().filter(|&&c| c).count() as f64 / self.clipped.len() as f64
    }
}

/// `clamp(img * gain)`. `Under` expects `gain <= 1`, `Over` expects `gain >= 1`.
pub fn degrade_exposure(img: &GrayImage, mode: ExposureMode, gain: f64) -> Result<ExposureDegradation> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::InvalidParameter(format!("gain must be > 0, got {gain}")));
    }
    match mode {
        ExposureMode::Under if gain > 1.0 => {
            return Err(Error::InvalidParameter("under-exposure needs gain <= 1".into()))
        }
        ExposureMode::Over if gain < 1.0 => {
            return Err(Error::InvalidParameter("over-exposure needs gain >= 1".into()))
        }
        _ => {}
    }
    let mut clipped = Vec::with_capacity(img.len());
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let s = v * gain;
            let c = match mode {
                ExposureMode::Over => s >= 1.0 && gain != 1.0,
                ExposureMode::Under => s < 0.5 / 255.0 && v > 0.0,
            };
            clipped.push(c);
            s.min(1.0)
        })
        .collect();
    Ok(ExposureDegradation {
        image: GrayImage::new(img.width(), img.height(), data)?,
        clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazeSpec {
    pub params: TurbulenceParams,
    /// RMS displacement per axis, px.
    pub warp_amplitude: f64,
    /// Standard deviation of the Gaussian smoothing the white-noise field, px.
    pub warp_correlation_length: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for HazeSpec {
    fn default() -> Self {
        Self {
            params: TurbulenceParams::default(),
            warp_amplitude: 0.5,
            warp_correlation_length: 40.0,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl HazeSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.warp_amplitude >= 0.0 && self.warp_amplitude.is_finite()) {
            return Err(Error::InvalidParameter("warp_amplitude must be >= 0".into()));
        }
        if !(self.warp_correlation_length >= 4.0 && self.warp_correlation_length.is_finite()) {
            return Err(Error::InvalidParameter("warp_correlation_length must be >= 4".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Smooth periodic random field with zero mean and the requested RMS.
pub fn smooth_random_field(
    width: usize,
    height: usize,
    correlation_length: f64,
    rms: f64,
    rng: &mut ChaCha8Rng,
) -> Plane {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut buf: Vec<Complex64> = (0..width * height)
        .map(|_| Complex64::new(normal.sample(rng), 0.0))
        .collect();
    if rms == 0.0 {
        return Plane::filled(width, height, 0.0);
    }
    let plan = Fft2d::new(width, height);
    plan.forward(&mut buf);
    let s2 = 2.0 * PI * PI * correlation_length * correlation_length;
    for v in 0..height {
        let fy = crate::image::signed_frequency(v, height) / height as f64;
        for u in 0..width {
            let fx = crate::image::signed_frequency(u, width) / width as f64;
            let g = if u == 0 && v == 0 { 0.0 } else { (-s2 * (fx * fx + fy * fy)).exp() };
            buf[v * width + u] *= g;
        }
    }
    plan.inverse(&mut buf);
    let n = (width * height) as f64;
    let field: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let cur = (field.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let scale = if cur > 0.0 { rms / cur } else { 0.0 };
    Plane::new(width, height, field.into_iter().map(|v| v * scale).collect()).expect("dims")
}

/// Samples `img` at `(x + dx, y + dy)` with bilinear interpolation.
pub fn warp(img: &Plane, dx: &Plane, dy: &Plane) -> Result<Plane> {
    img.same_dims(dx)?;
    img.same_dims(dy)?;
    Ok(Plane::from_fn(img.width(), img.height(), |x, y| {
        img.sample_bilinear(x as f64 + dx.get(x, y), y as f64 + dy.get(x, y))
    }))
}

/// Rigid translation: content moves by `(dx, dy)` px.
pub fn translate(img: &GrayImage, dx: f64, dy: f64) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        img.sample_bilinear(x as f64 - dx, y as f64 - dy)
    })
}

fn perturb(img: &Plane, mut f: impl FnMut(f64) -> f64) -> Plane {
    let data = img.data().iter().map(|&v| f(v)).collect();
    Plane::new(img.width(), img.height(), data).expect("same dims")
}

/// Adds i.i.d. Gaussian noise, then clamps.
pub fn add_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    Ok(GrayImage::from_plane_clamped(perturb(img, |v| v + normal.sample(&mut rng))))
}

/// Turbulence blur, then a smooth random warp, then additive noise.
pub fn degrade_haze(img: &GrayImage, spec: &HazeSpec) -> Result<GrayImage> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blurred = apply_otf(img, &spec.params)?;
    let (w, h) = (img.width(), img.height());
    let warped = if spec.warp_amplitude > 0.0 {
        let dx = smooth_random_field(w, h, spec.warp_correlation_length, spec.warp_amplitude, &mut rng);
        let dy = smooth_random_field(w, h, spec.warp_correlation_length, spec.warp_amplitude, &mut rng);
        warp(&blurred, &dx, &dy)?
    } else {
        blurred
    };
    let out = if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma > 0");
        perturb(&warped, |v| v + normal.sample(&mut rng))
    } else {
        warped
    };
    Ok(GrayImage::from_plane_clamped(out))
}

/// Blackbody spectral radiance, W sr^-1 m^-3.
pub fn planck_radiance(lambda: f64, temperature: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite() && temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(
            "wavelength and temperature must be positive".into(),
        ));
    }
    let c1 = 2.0 * PLANCK * LIGHT_SPEED * LIGHT_SPEED / lambda.powi(5);
    let x = PLANCK * LIGHT_SPEED / (lambda * BOLTZMANN * temperature);
    Ok(c1 / x.exp_m1())
}

/// Refractive index `1 + k_gd * rho`.
pub fn gladstone_dale(rho_gas: f64, k_gd: f64) -> Result<f64> {
    if !(rho_gas >= 0.0 && rho_gas.is_finite()) {
        return Err(Error::InvalidParameter("gas density must be >= 0".into()));
    }
    if !(k_gd > 0.0 && k_gd.is_finite()) {
        return Err(Error::InvalidParameter("Gladstone-Dale constant must be > 0".into()));
    }
    Ok(1.0 + k_gd * rho_gas)
}
