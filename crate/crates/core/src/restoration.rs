//! Turbulence restoration by Wiener deconvolution with an FSIM-driven
//! parameter search, plus the frame-averaging baseline.

use crate::error::{Error, Result};
use crate::fsim::{FsimConstants, FsimScorer};
use crate::image::{signed_frequency, Fft2d, GrayImage, Plane};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const OMEGA_MIN: f64 = 0.5;
pub const OMEGA_MAX: f64 = 1.5;
/// Search box for `log10(beta)`.
pub const LOG_BETA_MIN: f64 = -9.0;
pub const LOG_BETA_MAX: f64 = -3.0;
pub const DEFAULT_NSR: f64 = 0.01;
pub const DEFAULT_FRAMES: usize = 15;

/// Parameters of `H(u, v) = exp(-beta * (u^2 + v^2)^omega)` with `u, v` in
/// cycles per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceParams {
    pub beta: f64,
    pub omega: f64,
}

impl Default for TurbulenceParams {
    fn default() -> Self {
        Self {
            beta: 2.5e-5,
            omega: 5.0 / 6.0,
        }
    }
}

impl TurbulenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(OMEGA_MIN..=OMEGA_MAX).contains(&self.omega) {
            return Err(Error::InvalidParameter(format!(
                "omega must be in [{OMEGA_MIN}, {OMEGA_MAX}], got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn otf_value(r2: f64, p: &TurbulenceParams) -> f64 {
    if r2 == 0.0 {
        1.0
    } else {
        (-p.beta * r2.powf(p.omega)).exp()
    }
}

/// Unshifted transfer function (DC at index 0).
pub fn turbulence_otf(width: usize, height: usize, p: &TurbulenceParams) -> Result<Plane> {
    p.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(Plane::from_fn(width, height, |u, v| {
        let fu = signed_frequency(u, width);
        let fv = signed_frequency(v, height);
        otf_value(fu * fu + fv * fv, p)
    }))
}

fn filter_real(img: &Plane, gain: impl Fn(usize) -> f64) -> Plane {
    let plan = Fft2d::new(img.width(), img.height());
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        *c *= gain(k);
    }
    plan.inverse(&mut buf);
    Plane::new(img.width(), img.height(), buf.iter().map(|c| c.re).collect()).expect("same dims")
}

/// Circular convolution with the turbulence OTF; unclamped.
pub fn apply_otf(img: &Plane, p: &TurbulenceParams) -> Result<Plane> {
    let h = turbulence_otf(img.width(), img.height(), p)?;
    Ok(filter_real(img, |k| h.data()[k]))
}

#[inline]
fn wiener_gain(h: f64, nsr: f64) -> f64 {
    let den = h * h + nsr;
    if den == 0.0 {
        0.0
    } else {
        h / den
    }
}

fn check_nsr(nsr: f64) -> Result<()> {
    if !(nsr >= 0.0 && nsr.is_finite()) {
        return Err(Error::InvalidParameter(format!("nsr must be >= 0, got {nsr}")));
    }
    Ok(())
}

/// Wiener deconvolution without clamping; linear in `img`.
pub fn restore_plane(img: &Plane, p: &TurbulenceParams, nsr: f64) -> Result<Plane> {
    check_nsr(nsr)?;
    let h = turbulence_otf(img.width(), img.height(), p)?;
    Ok(filter_real(img, |k| wiener_gain(h.data()[k], nsr)))
}

pub fn wiener_restore(img: &GrayImage, p: &TurbulenceParams, nsr: f64) -> Result<GrayImage> {
    Ok(GrayImage::from_plane_clamped(restore_plane(img, p, nsr)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step improves FSIM by no more than this.
    pub tolerance: f64,
    pub nsr: f64,
    /// Initial simplex offsets in `log10(beta)` and `omega`.
    pub step_log_beta: f64,
    pub step_omega: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            nsr: DEFAULT_NSR,
            step_log_beta: 0.5,
            step_omega: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestorationReport {
    pub params: TurbulenceParams,
    /// FSIM of the unrestored target.
    pub initial_fsim: f64,
    pub final_fsim: f64,
    /// Best FSIM after building the simplex, then after each iteration.
    pub fsim_trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// True when no parameter pair beat the unrestored target, which is then
    /// returned as is.
    pub unrestored: bool,
}

struct Objective<'a> {
    scorer: FsimScorer,
    spectrum: Vec<Complex64>,
    plan: Fft2d,
    target: &'a GrayImage,
    nsr: f64,
    evaluations: usize,
}

impl Objective<'_> {
    fn restore(&self, p: &TurbulenceParams) -> Plane {
        let (w, h) = (self.target.width(), self.target.height());
        let mut buf = self.spectrum.clone();
        for v in 0..h {
            let fv = signed_frequency(v, h);
            for u in 0..w {
                let fu = signed_frequency(u, w);
                buf[v * w + u] *= wiener_gain(otf_value(fu * fu + fv * fv, p), self.nsr);
            }
        }
        self.plan.inverse(&mut buf);
        Plane::new(w, h, buf.iter().map(|c| c.re.clamp(0.0, 1.0)).collect()).expect("same dims")
    }

    fn eval(&mut self, x: [f64; 2]) -> Result<f64> {
        self.evaluations += 1;
        let p = to_params(x);
        self.scorer.score(&self.restore(&p))
    }
}

fn to_params(x: [f64; 2]) -> TurbulenceParams {
    TurbulenceParams {
        beta: 10f64.powf(x[0]),
        omega: x[1],
    }
}

fn project(x: [f64; 2]) -> [f64; 2] {
    [
        x[0].clamp(LOG_BETA_MIN, LOG_BETA_MAX),
        x[1].clamp(OMEGA_MIN, OMEGA_MAX),
    ]
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Searches `(beta, omega)` maximizing FSIM between the restored target and
/// the reference. Uses a box-bounded Nelder-Mead simplex in
/// `(log10 beta, omega)`.
pub fn optimize_params(
    reference: &GrayImage,
    target: &GrayImage,
    init: TurbulenceParams,
    settings: &OptimizerSettings,
) -> Result<(GrayImage, RestorationReport)> {
    reference.same_dims(target)?;
    init.validate()?;
    check_nsr(settings.nsr)?;
    let scorer = FsimScorer::new(reference, FsimConstants::default())?;
    let initial_fsim = scorer.score(target)?;
    let plan = Fft2d::new(target.width(), target.height());
    let mut spectrum: Vec<Complex64> =
        target.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut spectrum);
    let mut obj = Objective {
        scorer,
        spectrum,
        plan,
        target,
        nsr: settings.nsr,
        evaluations: 0,
    };

    let x0 = project([init.beta.log10(), init.omega]);
    let mut x1 = project([x0[0] + settings.step_log_beta, x0[1]]);
    if x1 == x0 {
        x1 = project([x0[0] - settings.step_log_beta, x0[1]]);
    }
    let mut x2 = project([x0[0], x0[1] + settings.step_omega]);
    if x2 == x0 {
        x2 = project([x0[0], x0[1] - settings.step_omega]);
    }
    let mut simplex = Vec::with_capacity(3);
    for x in [x0, x1, x2] {
        let f = obj.eval(x)?;
        simplex.push((x, f));
    }
    // Maximizing: best first. Stable sort keeps evaluation order on ties.
    let order = |s: &mut Vec<([f64; 2], f64)>| s.sort_by(|a, b| b.1.total_cmp(&a.1));
    order(&mut simplex);
    let mut trace = vec![simplex[0].1];
    let mut best = simplex[0].1;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iterations {
        iterations += 1;
        let (xb, fb) = simplex[0];
        let (xs, fs) = simplex[1];
        let (xw, fw) = simplex[2];
        let centroid = lerp(xb, xs, 0.5);
        let xr = project(lerp(centroid, xw, -1.0));
        let fr = obj.eval(xr)?;
        if fr > fb {
            let xe = project(lerp(centroid, xw, -2.0));
            let fe = obj.eval(xe)?;
            simplex[2] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > fs {
            simplex[2] = (xr, fr);
        } else {
            let (xc, fc) = if fr > fw {
                let xc = project(lerp(centroid, xr, 0.5));
                (xc, obj.eval(xc)?)
            } else {
                let xc = project(lerp(centroid, xw, 0.5));
                (xc, obj.eval(xc)?)
            };
            if fc > fw.max(fr) {
                simplex[2] = (xc, fc);
            } else {
                for i in 1..3 {
                    let x = lerp(xb, simplex[i].0, 0.5);
                    simplex[i] = (x, obj.eval(x)?);
                }
            }
        }
        order(&mut simplex);
        let new_best = simplex[0].1;
        trace.push(new_best);
        if new_best > best {
            let delta = new_best - best;
            best = new_best;
            if delta <= settings.tolerance {
                converged = true;
                break;
            }
        } else if simplex[0].1 - simplex[2].1 <= settings.tolerance {
            // Flat simplex: no further accepted improvement is possible.
            converged = true;
            break;
        }
    }

    let (xbest, fbest) = simplex[0];
    let params = to_params(xbest);
    let unrestored = fbest <= initial_fsim;
    let (image, final_fsim) = if unrestored {
        (target.clone(), initial_fsim)
    } else {
        (GrayImage::from_plane_clamped(obj.restore(&params)), fbest)
    };
    Ok((
        image,
        RestorationReport {
            params,
            initial_fsim,
            final_fsim,
            fsim_trace: trace,
            iterations,
            evaluations: obj.evaluations,
            converged,
            unrestored,
        },
    ))
}

/// Pixel-wise mean without clamping.
pub fn average_planes(frames: &[Plane]) -> Result<Plane> {
    let first = frames.first().ok_or(Error::EmptyInput)?;
    let mut acc = Plane::filled(first.width(), first.height(), 0.0);
    for f in frames {
        first.same_dims(f)?;
        for (a, v) in acc.data_mut().iter_mut().zip(f.data()) {
            *a += v;
        }
    }
    let n = frames.len() as f64;
    Ok(acc.map(|a| a / n))
}

/// Pixel-wise mean of a stack of equally sized frames.
pub fn grayscale_average(frames: &[GrayImage]) -> Result<GrayImage> {
    let mut stack = AverageStack::new(frames.len().max(1))?;
    for f in frames {
        stack.push(f)?;
    }
    stack.average()
}

/// Running per-pixel sum of up to `capacity` frames.
#[derive(Debug, Clone)]
pub struct AverageStack {
    capacity: usize,
    count: usize,
    sum: Option<Plane>,
}

impl AverageStack {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("stack capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            count: 0,
            sum: None,
        })
    }

    /// Adds a frame; returns false once the stack is full.
    pub fn push(&mut self, frame: &GrayImage) -> Result<bool> {
        if let Some(sum) = &self.sum {
            sum.same_dims(frame)?;
        }
        if self.is_full() {
            return Ok(false);
        }
        let sum = self
            .sum
            .get_or_insert_with(|| Plane::filled(frame.width(), frame.height(), 0.0));
        for (a, v) in sum.data_mut().iter_mut().zip(frame.data()) {
            *a += v;
        }
        self.count += 1;
        Ok(true)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.count >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn average(&self) -> Result<GrayImage> {
        let sum = self.sum.as_ref().ok_or(Error::EmptyInput)?;
        let n = self.count as f64;
        Ok(GrayImage::from_plane_clamped(sum.map(|a| a / n)))
    }
}

impl Default for AverageStack {
    fn default() -> Self {
        Self::new(DEFAULT_FRAMES).expect("nonzero")
    }
}

/// `sum(clean^2) / sum((noisy - clean)^2)`.
pub fn snr(clean: &Plane, noisy: &Plane) -> Result<f64> {
    clean.same_dims(noisy)?;
    let signal: f64 = clean.data().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .data()
        .iter()
        .zip(noisy.data())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    if noise == 0.0 {
        return Err(Error::InfiniteSnr);
    }
    Ok(signal / noise)
}
