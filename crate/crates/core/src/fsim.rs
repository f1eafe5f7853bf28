//! Feature-similarity index built on phase congruency and gradient magnitude.
//!
//! Phase congruency uses a bank of one-sided log-Gabor filters applied in the
//! frequency domain. The real part of each complex response is the
//! even-symmetric output and the imaginary part the odd-symmetric output.
//! Responses are pooled over orientations within a scale, then
//! `PC = |sum_n (e_n + i o_n)| / (eps + sum_n |e_n + i o_n|)`.

use crate::error::{Error, Result};
use crate::image::{gradient, signed_frequency, Fft2d, Plane};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smallest width/height for which the filter bank is meaningful.
pub const MIN_FSIM_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogGaborConfig {
    pub n_scales: usize,
    pub n_orientations: usize,
    /// Wavelength of the finest scale, in pixels.
    pub min_wavelength: f64,
    pub scale_mult: f64,
    /// Ratio of the radial Gaussian's sigma to the center frequency.
    pub sigma_ratio: f64,
    /// Orientation spacing over angular sigma.
    pub d_theta_on_sigma: f64,
}

impl Default for LogGaborConfig {
    fn default() -> Self {
        Self {
            n_scales: 4,
            n_orientations: 4,
            min_wavelength: 6.0,
            scale_mult: 2.0,
            sigma_ratio: 0.55,
            d_theta_on_sigma: 1.2,
        }
    }
}

/// Positive stabilizers of the similarity maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsimConstants {
    pub epsilon: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for FsimConstants {
    fn default() -> Self {
        Self {
            epsilon: 0.001,
            t1: 0.85,
            t2: 160.0,
        }
    }
}

/// Frequency-domain filters for one raster size, unshifted layout.
#[derive(Debug, Clone)]
pub struct LogGaborBank {
    width: usize,
    height: usize,
    cfg: LogGaborConfig,
    /// One filter per `(scale, orientation)`, index `scale * n_orient + o`.
    filters: Vec<Vec<f64>>,
    /// Sum over orientations for each scale.
    scale_sums: Vec<Vec<f64>>,
}

impl LogGaborBank {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn config(&self) -> &LogGaborConfig {
        &self.cfg
    }

    pub fn filter(&self, scale: usize, orientation: usize) -> &[f64] {
        &self.filters[scale * self.cfg.n_orientations + orientation]
    }

    pub fn scale_filter(&self, scale: usize) -> &[f64] {
        &self.scale_sums[scale]
    }
}

pub fn build_log_gabor(width: usize, height: usize, cfg: &LogGaborConfig) -> Result<LogGaborBank> {
    if width < MIN_FSIM_SIZE || height < MIN_FSIM_SIZE {
        return Err(Error::ImageTooSmall {
            width,
            height,
            min: MIN_FSIM_SIZE,
        });
    }
    if cfg.n_scales == 0 || cfg.n_orientations == 0 {
        return Err(Error::InvalidParameter("bank needs at least one scale and orientation".into()));
    }
    if !(cfg.min_wavelength > 0.0 && cfg.scale_mult > 0.0 && cfg.sigma_ratio > 0.0 && cfg.sigma_ratio < 1.0)
    {
        return Err(Error::InvalidParameter("invalid log-Gabor parameters".into()));
    }
    let n = width * height;
    let mut radius = vec![0.0; n];
    let mut theta = vec![0.0; n];
    for v in 0..height {
        let fy = signed_frequency(v, height) / height as f64;
        for u in 0..width {
            let fx = signed_frequency(u, width) / width as f64;
            radius[v * width + u] = fx.hypot(fy);
            // Image rows grow downwards; flip so angles are counter-clockwise.
            theta[v * width + u] = (-fy).atan2(fx);
        }
    }
    // Butterworth low-pass removes the spectrum corners.
    let lowpass: Vec<f64> = radius
        .iter()
        .map(|&r| 1.0 / (1.0 + (r / 0.45).powi(30)))
        .collect();
    let log_sigma_sq = 2.0 * cfg.sigma_ratio.ln().powi(2);
    let theta_sigma = PI / cfg.n_orientations as f64 / cfg.d_theta_on_sigma;

    let mut filters = Vec::with_capacity(cfg.n_scales * cfg.n_orientations);
    let mut scale_sums = Vec::with_capacity(cfg.n_scales);
    for s in 0..cfg.n_scales {
        let wavelength = cfg.min_wavelength * cfg.scale_mult.powi(s as i32);
        let fo = 1.0 / wavelength;
        let radial: Vec<f64> = radius
            .iter()
            .zip(&lowpass)
            .map(|(&r, &lp)| {
                if r == 0.0 {
                    0.0
                } else {
                    (-(r / fo).ln().powi(2) / log_sigma_sq).exp() * lp
                }
            })
            .collect();
        let mut sum = vec![0.0; n];
        for o in 0..cfg.n_orientations {
            let angle = o as f64 * PI / cfg.n_orientations as f64;
            let (sa, ca) = angle.sin_cos();
            let f: Vec<f64> = theta
                .iter()
                .zip(&radial)
                .map(|(&t, &rad)| {
                    let (st, ct) = t.sin_cos();
                    let ds = st * ca - ct * sa;
                    let dc = ct * ca + st * sa;
                    let dtheta = ds.atan2(dc).abs();
                    rad * (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
                })
                .collect();
            for (acc, v) in sum.iter_mut().zip(&f) {
                *acc += v;
            }
            filters.push(f);
        }
        scale_sums.push(sum);
    }
    Ok(LogGaborBank {
        width,
        height,
        cfg: cfg.clone(),
        filters,
        scale_sums,
    })
}

/// Phase congruency and its constituents.
#[derive(Debug, Clone, PartialEq)]
pub struct PcMap {
    pub pc: Plane,
    pub amplitude_sum: Plane,
    pub energy: Plane,
}

fn spectrum_of(img: &Plane, plan: &Fft2d) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    buf
}

fn pc_from_spectrum(
    spec: &[Complex64],
    bank: &LogGaborBank,
    plan: &Fft2d,
    eps: f64,
    scale: f64,
) -> PcMap {
    let n = spec.len();
    let mut sum_resp = vec![Complex64::new(0.0, 0.0); n];
    let mut amp_sum = vec![0.0; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..bank.cfg.n_scales {
        let filt = bank.scale_filter(s);
        for ((b, &f), &x) in buf.iter_mut().zip(filt).zip(spec) {
            *b = x * f;
        }
        plan.inverse(&mut buf);
        for ((acc, amp), r) in sum_resp.iter_mut().zip(amp_sum.iter_mut()).zip(&buf) {
            *acc += r;
            *amp += r.re.hypot(r.im);
        }
    }
    let energy: Vec<f64> = sum_resp.iter().map(|c| c.re.hypot(c.im)).collect();
    // Responses at FFT round-off level are treated as no response at all.
    let floor = 1e-10 * scale;
    let pc: Vec<f64> = energy
        .iter()
        .zip(&amp_sum)
        .map(|(&e, &a)| if a <= floor { 0.0 } else { (e / (eps + a)).clamp(0.0, 1.0) })
        .collect();
    let (w, h) = (bank.width, bank.height);
    PcMap {
        pc: Plane::new(w, h, pc).expect("bank dims"),
        amplitude_sum: Plane::new(w, h, amp_sum).expect("bank dims"),
        energy: Plane::new(w, h, energy).expect("bank dims"),
    }
}

fn max_abs(img: &Plane) -> f64 {
    img.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Phase congruency of `img` using the filters of `bank`.
pub fn phase_congruency(img: &Plane, bank: &LogGaborBank, eps: f64) -> Result<PcMap> {
    if img.width() != bank.width || img.height() != bank.height {
        return Err(Error::DimensionMismatch(
            img.width(),
            img.height(),
            bank.width,
            bank.height,
        ));
    }
    let plan = Fft2d::new(bank.width, bank.height);
    let spec = spectrum_of(img, &plan);
    Ok(pc_from_spectrum(&spec, bank, &plan, eps, max_abs(img)))
}

/// Features of one image: phase congruency and 0-255 scale gradient magnitude.
#[derive(Debug, Clone)]
struct Features {
    pc: Plane,
    gm: Plane,
}

/// Scores many targets against one fixed reference, reusing the filter bank
/// and the reference features.
#[derive(Debug, Clone)]
pub struct FsimScorer {
    bank: LogGaborBank,
    plan: Fft2d,
    constants: FsimConstants,
    reference: Features,
}

impl FsimScorer {
    pub fn new(reference: &Plane, constants: FsimConstants) -> Result<Self> {
        Self::with_bank_config(reference, constants, &LogGaborConfig::default())
    }

    pub fn with_bank_config(
        reference: &Plane,
        constants: FsimConstants,
        cfg: &LogGaborConfig,
    ) -> Result<Self> {
        if !(constants.epsilon > 0.0 && constants.t1 > 0.0 && constants.t2 > 0.0) {
            return Err(Error::InvalidParameter("FSIM constants must be > 0".into()));
        }
        let bank = build_log_gabor(reference.width(), reference.height(), cfg)?;
        let plan = Fft2d::new(reference.width(), reference.height());
        let mut scorer = Self {
            bank,
            plan,
            constants,
            reference: Features {
                pc: Plane::filled(1, 1, 0.0),
                gm: Plane::filled(1, 1, 0.0),
            },
        };
        scorer.reference = scorer.features(reference)?;
        Ok(scorer)
    }

    fn features(&self, img: &Plane) -> Result<Features> {
        let spec = spectrum_of(img, &self.plan);
        let pc = pc_from_spectrum(
            &spec,
            &self.bank,
            &self.plan,
            self.constants.epsilon,
            max_abs(img),
        )
        .pc;
        let gm = gradient(img)?.magnitude.map(|g| g * 255.0);
        Ok(Features { pc, gm })
    }

    pub fn score(&self, target: &Plane) -> Result<f64> {
        if target.width() != self.bank.width || target.height() != self.bank.height {
            return Err(Error::DimensionMismatch(
                self.bank.width,
                self.bank.height,
                target.width(),
                target.height(),
            ));
        }
        let t = self.features(target)?;
        pooled(&self.reference, &t, &self.constants)
    }

    /// Pointwise similarity maps `(S_PC, S_G)` against the reference.
    pub fn similarity_maps(&self, target: &Plane) -> Result<(Plane, Plane)> {
        let t = self.features(target)?;
        let c = self.constants;
        let spc = self.reference.pc.zip_map(&t.pc, |a, b| ratio(a, b, c.t1));
        let sg = self.reference.gm.zip_map(&t.gm, |a, b| ratio(a, b, c.t2));
        Ok((spc, sg))
    }
}

/// `(2ab + T) / (a^2 + b^2 + T)`, written so swapping `a` and `b` is
/// bit-identical and `a == b` gives exactly 1.
#[inline]
fn ratio(a: f64, b: f64, t: f64) -> f64 {
    (2.0 * (a * b) + t) / (a * a + b * b + t)
}

fn pooled(r: &Features, t: &Features, c: &FsimConstants) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..r.pc.len() {
        let (p1, p2) = (r.pc.data()[k], t.pc.data()[k]);
        let (g1, g2) = (r.gm.data()[k], t.gm.data()[k]);
        let w = p1.max(p2);
        num += ratio(p1, p2, c.t1) * ratio(g1, g2, c.t2) * w;
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::UndefinedFsim);
    }
    Ok(num / den)
}

/// Full-reference FSIM of `target` against `reference`; symmetric.
pub fn fsim(reference: &Plane, target: &Plane, c: FsimConstants) -> Result<f64> {
    reference.same_dims(target)?;
    FsimScorer::new(reference, c)?.score(target)
}
