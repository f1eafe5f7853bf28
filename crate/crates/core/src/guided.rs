//! Edge-aware multiscale guided filtering.
//!
//! Each scale classifies gradient magnitudes into weak (noise-like) and
//! strong (edge) sets by the uniformity of their local variance, shrinks each
//! set in a single-level Haar domain, builds an edge-strength weight from the
//! cleaned gradient map and finally solves the regularized local linear model
//! in closed form.

use crate::error::{Error, Result};
use crate::image::{box_mean, gradient, local_std, local_variance, GradientField, GrayImage, Plane, WindowSpec};
use serde::{Deserialize, Serialize};

/// Tunables of the edge-aware filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidedFilterParams {
    /// Window radius of the linear model and of the coarse variation window.
    pub radius: usize,
    /// Regularization weight on the slope prior.
    pub lambda: f64,
    /// Sigmoid steepness of the slope prior.
    pub eta: f64,
    /// Sigmoid center; `None` uses the image mean of the edge strength.
    pub mu_kappa_inf: Option<f64>,
    /// Stabilizer for every ratio in the weight construction.
    pub epsilon_w: f64,
    /// Weak/strong classification threshold on rho.
    pub edge_threshold: f64,
    /// Weak-set soft threshold, in multiples of the set's median magnitude.
    pub weak_factor: f64,
    /// Strong-set threshold relative to the weak-set rule; 0 disables it.
    pub strong_scale: f64,
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        Self {
            radius: 5,
            lambda: 1e-3,
            eta: 10.0,
            mu_kappa_inf: None,
            epsilon_w: 1e-3,
            edge_threshold: 0.2,
            weak_factor: 3.0,
            strong_scale: 0.25,
        }
    }
}

impl GuidedFilterParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.radius < 1 {
            return bad("filter radius must be >= 1");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be > 0");
        }
        if !(self.epsilon_w > 0.0) {
            return bad("epsilon_w must be > 0");
        }
        if !(self.edge_threshold > 0.0) {
            return bad("edge threshold must be > 0");
        }
        if !(self.eta.is_finite() && self.weak_factor >= 0.0 && self.strong_scale >= 0.0) {
            return bad("eta, weak_factor and strong_scale must be finite and non-negative");
        }
        Ok(())
    }
}

/// Weak/strong partition of the gradient field.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeClassification {
    pub rho: Plane,
    pub weak_mask: Vec<bool>,
    pub strong_mask: Vec<bool>,
    pub threshold: f64,
}

/// Per-pixel edge strength and the derived regularization controls.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightMap {
    pub kappa: Plane,
    pub t_hat: Plane,
    pub psi: Plane,
}

/// Classifies pixels by `rho = |var / mean(var) - 1|` where `var` is the local
/// variance of the gradient magnitude. A field with no variance anywhere is
/// classified all-weak.
pub fn classify_edges(
    grad: &GradientField,
    radius: usize,
    threshold: f64,
) -> Result<EdgeClassification> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter("edge threshold must be > 0".into()));
    }
    let var = local_variance(&grad.magnitude, WindowSpec::new(radius)?);
    let energy = grad.magnitude.data().iter().map(|g| g * g).sum::<f64>() / var.len() as f64;
    Ok(classify_variance(&var, energy, threshold))
}

fn classify_variance(var: &Plane, energy: f64, threshold: f64) -> EdgeClassification {
    let mu = var.mean();
    // Rounding residue of E[x^2] - E[x]^2 on a uniform field is not variance.
    let degenerate = !(mu > 1e-12 * energy.max(f64::MIN_POSITIVE));
    let rho = if degenerate {
        Plane::filled(var.width(), var.height(), 0.0)
    } else {
        var.map(|v| (v / mu - 1.0).abs())
    };
    let weak_mask: Vec<bool> = rho.data().iter().map(|&r| r < threshold).collect();
    let strong_mask = weak_mask.iter().map(|w| !w).collect();
    EdgeClassification {
        rho,
        weak_mask,
        strong_mask,
        threshold,
    }
}

/// Shrinks each edge set separately and merges them: `g' = g0' + g1'`.
///
/// Soft thresholds are `weak_factor * median(|g|)` over the weak set and
/// `strong_scale` times the same rule over the strong set, applied to all
/// four sub-bands of an averaging Haar transform.
pub fn denoise_gradients(
    cls: &EdgeClassification,
    grad: &GradientField,
    p: &GuidedFilterParams,
) -> Result<Plane> {
    let g = &grad.magnitude;
    if cls.weak_mask.len() != g.len() {
        return Err(Error::DimensionMismatch(
            cls.rho.width(),
            cls.rho.height(),
            g.width(),
            g.height(),
        ));
    }
    let masked = |mask: &[bool]| {
        let data = g
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Plane::new(g.width(), g.height(), data).expect("same dims")
    };
    let median_abs = |mask: &[bool]| {
        let mut vals: Vec<f64> = g
            .data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.abs())
            .collect();
        median(&mut vals)
    };

    let t_weak = p.weak_factor * median_abs(&cls.weak_mask);
    let t_strong = p.strong_scale * p.weak_factor * median_abs(&cls.strong_mask);
    let weak = haar_soft_threshold(&masked(&cls.weak_mask), t_weak);
    let strong = haar_soft_threshold(&masked(&cls.strong_mask), t_strong);

    let data = (0..g.len())
        .map(|i| {
            if cls.weak_mask[i] {
                weak.data()[i].max(0.0)
            } else {
                strong.data()[i].max(0.0)
            }
        })
        .collect();
    Plane::new(g.width(), g.height(), data)
}

fn median(vals: &mut [f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Single-level averaging Haar transform, soft threshold on every sub-band,
/// inverse. Odd dimensions are replicate-padded and cropped back. A zero
/// threshold returns the input unchanged.
fn haar_soft_threshold(img: &Plane, t: f64) -> Plane {
    if t <= 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let mut out = Plane::filled(w, h, 0.0);
    for by in (0..h).step_by(2) {
        for bx in (0..w).step_by(2) {
            let (x, y) = (bx as isize, by as isize);
            let a = img.get_clamped(x, y);
            let b = img.get_clamped(x + 1, y);
            let c = img.get_clamped(x, y + 1);
            let d = img.get_clamped(x + 1, y + 1);
            let s = soft((a + b + c + d) * 0.25, t);
            let hz = soft((a - b + c - d) * 0.25, t);
            let vt = soft((a + b - c - d) * 0.25, t);
            let dg = soft((a - b - c + d) * 0.25, t);
            let rec = [
                (0, 0, s + hz + vt + dg),
                (1, 0, s - hz + vt - dg),
                (0, 1, s + hz - vt - dg),
                (1, 1, s - hz - vt + dg),
            ];
            for (ox, oy, v) in rec {
                let (xx, yy) = (bx + ox, by + oy);
                if xx < w && yy < h {
                    out.set(xx, yy, v);
                }
            }
        }
    }
    out
}

/// Builds the edge strength `kappa = phi_3 * phi_r * g'` (phi: local
/// coefficient of variation of `g'`), the global relative weight `T_hat` and
/// the sigmoid slope prior `psi`.
pub fn edge_weight(g_prime: &Plane, p: &GuidedFilterParams) -> Result<EdgeWeightMap> {
    let eps = p.epsilon_w;
    let cov = |radius: usize| -> Result<Plane> {
        let w = WindowSpec::new(radius)?;
        let sd = local_std(g_prime, w);
        let mean = box_mean(g_prime, radius);
        Ok(sd.zip_map(&mean, |s, m| s / (m + eps)))
    };
    let phi3 = cov(3)?;
    let phir = cov(p.radius)?;
    let kappa = Plane::new(
        g_prime.width(),
        g_prime.height(),
        phi3.data()
            .iter()
            .zip(phir.data())
            .zip(g_prime.data())
            .map(|((a, b), g)| a * b * g)
            .collect(),
    )?;

    let inv_mean = kappa.data().iter().map(|k| 1.0 / (k + eps)).sum::<f64>() / kappa.len() as f64;
    let t_hat = kappa.map(|k| (k + eps) * inv_mean);

    let center = p.mu_kappa_inf.unwrap_or_else(|| kappa.mean());
    let psi = kappa.map(|k| {
        let s = 1.0 / (1.0 + (-p.eta * (k - center)).exp());
        s.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    });
    Ok(EdgeWeightMap { kappa, t_hat, psi })
}

/// Closed-form minimizer of the regularized local linear model, without the
/// final clamp. `a = (cov(q,I) + l psi) / (var(q) + l)` with `l = lambda /
/// T_hat` taken at the window center; coefficients are averaged over all
/// windows covering a pixel.
pub fn guided_filter_plane(
    input: &Plane,
    guide: &Plane,
    w: &EdgeWeightMap,
    radius: usize,
    lambda: f64,
) -> Result<Plane> {
    input.same_dims(guide)?;
    input.same_dims(&w.t_hat)?;
    let mean_i = box_mean(input, radius);
    let mean_q = box_mean(guide, radius);
    let mean_qi = box_mean(&guide.zip_map(input, |q, i| q * i), radius);
    let mean_qq = box_mean(&guide.map(|q| q * q), radius);

    let n = input.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for k in 0..n {
        let mi = mean_i.data()[k];
        let mq = mean_q.data()[k];
        let var_q = (mean_qq.data()[k] - mq * mq).max(0.0);
        let cov = mean_qi.data()[k] - mq * mi;
        let reg = lambda / w.t_hat.data()[k];
        let ak = (cov + reg * w.psi.data()[k]) / (var_q + reg);
        a[k] = ak;
        b[k] = mi - ak * mq;
    }
    let (wd, ht) = (input.width(), input.height());
    let a = box_mean(&Plane::new(wd, ht, a)?, radius);
    let b = box_mean(&Plane::new(wd, ht, b)?, radius);
    Ok(Plane::new(
        wd,
        ht,
        (0..n)
            .map(|k| a.data()[k] * guide.data()[k] + b.data()[k])
            .collect(),
    )?)
}

/// Edge-aware guided filter, clamped to `[0, 1]`.
pub fn guided_filter(
    input: &GrayImage,
    guide: &GrayImage,
    w: &EdgeWeightMap,
    p: &GuidedFilterParams,
) -> Result<GrayImage> {
    p.validate()?;
    let out = guided_filter_plane(input, guide, w, p.radius, p.lambda)?;
    Ok(GrayImage::from_plane_clamped(out))
}

/// Weight map for one self-guided scale, computed from `img` itself.
pub fn weights_for(img: &Plane, radius: usize, p: &GuidedFilterParams) -> Result<EdgeWeightMap> {
    let grad = gradient(img)?;
    let cls = classify_edges(&grad, radius, p.edge_threshold)?;
    let g_prime = denoise_gradients(&cls, &grad, p)?;
    edge_weight(
        &g_prime,
        &GuidedFilterParams {
            radius,
            ..p.clone()
        },
    )
}

/// Self-guided filtering applied sequentially at each radius, recomputing
/// the weight map from the current image at every scale. Unclamped.
pub fn multiscale_filter_plane(
    input: &Plane,
    p: &GuidedFilterParams,
    scales: &[usize],
) -> Result<Plane> {
    p.validate()?;
    if scales.is_empty() {
        return Err(Error::InvalidParameter("scale list must not be empty".into()));
    }
    let mut current = input.clone();
    for &radius in scales {
        if radius == 0 {
            return Err(Error::InvalidParameter("scale radius must be >= 1".into()));
        }
        let w = weights_for(&current, radius, p)?;
        current = guided_filter_plane(&current, &current, &w, radius, p.lambda)?;
    }
    Ok(current)
}

/// Multiscale self-guided filter on a normalized image, clamped to `[0, 1]`.
pub fn multiscale_filter(
    input: &GrayImage,
    p: &GuidedFilterParams,
    scales: &[usize],
) -> Result<GrayImage> {
    Ok(GrayImage::from_plane_clamped(multiscale_filter_plane(
        input, p, scales,
    )?))
}
